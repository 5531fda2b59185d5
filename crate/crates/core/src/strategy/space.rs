use super::actions::{apply_action, Action};
use super::StrategyError;

/// Largest language count the full Cartesian space will be built for.
pub const MAX_FULL_SPACE_LANGUAGES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub actions: Vec<Action>,
    pub alpha: Vec<f64>,
}

/// Ordered candidate weight vectors around a previous state.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    candidates: Vec<Candidate>,
}

impl SearchSpace {
    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn num_languages(&self) -> usize {
        self.candidates.first().map_or(0, |c| c.alpha.len())
    }
}

fn candidate(prev: &[f64], actions: Vec<Action>, mu: f64) -> Result<Candidate, StrategyError> {
    let alpha = prev
        .iter()
        .zip(&actions)
        .map(|(&x, &a)| apply_action(x, a, mu))
        .collect::<Result<_, _>>()?;
    Ok(Candidate { actions, alpha })
}

/// The three uniform moves `[all-up, all-down, all-keep]`.
pub fn build_subspace(prev: &[f64], mu: f64) -> Result<SearchSpace, StrategyError> {
    if prev.is_empty() {
        return Err(StrategyError::LengthMismatch { expected: 1, got: 0 });
    }
    let candidates = Action::ALL
        .iter()
        .map(|&a| candidate(prev, vec![a; prev.len()], mu))
        .collect::<Result<_, _>>()?;
    Ok(SearchSpace { candidates })
}

/// Every per-language combination of moves, `3^|L|` candidates in
/// lexicographic order (first language most significant, up < down < keep).
pub fn build_full_space(prev: &[f64], mu: f64) -> Result<SearchSpace, StrategyError> {
    let l = prev.len();
    if l == 0 {
        return Err(StrategyError::LengthMismatch { expected: 1, got: 0 });
    }
    if l > MAX_FULL_SPACE_LANGUAGES {
        return Err(StrategyError::SpaceTooLarge { languages: l });
    }
    let total = 3usize.pow(l as u32);
    let mut candidates = Vec::with_capacity(total);
    for j in 0..total {
        let mut actions = vec![Action::Keep; l];
        let mut rest = j;
        for slot in actions.iter_mut().rev() {
            *slot = Action::ALL[rest % 3];
            rest /= 3;
        }
        candidates.push(candidate(prev, actions, mu)?);
    }
    Ok(SearchSpace { candidates })
}

/// Candidate-major matrix of per-language validation losses.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResults {
    rows: Vec<Vec<f64>>,
}

impl TrialResults {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, StrategyError> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || width == 0 {
            return Err(StrategyError::TrialResults("empty matrix".into()));
        }
        for (j, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(StrategyError::TrialResults(format!(
                    "row {j} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(StrategyError::TrialResults(format!("row {j} has a non-finite loss")));
            }
        }
        Ok(TrialResults { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn num_candidates(&self) -> usize {
        self.rows.len()
    }

    pub fn num_languages(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row_means(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect()
    }
}

/// Outcome of a selection: chosen move and weight per language.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub actions: Vec<Action>,
    pub alpha: Vec<f64>,
}

fn check_dims(space: &SearchSpace, results: &TrialResults) -> Result<(), StrategyError> {
    if results.num_candidates() != space.len() {
        return Err(StrategyError::LengthMismatch {
            expected: space.len(),
            got: results.num_candidates(),
        });
    }
    if results.num_languages() != space.num_languages() {
        return Err(StrategyError::LengthMismatch {
            expected: space.num_languages(),
            got: results.num_languages(),
        });
    }
    Ok(())
}

/// Index of the smallest score; ties go to keep, then down, then up, then
/// the earliest candidate.
fn argmin_with_ties(scores: impl Iterator<Item = (f64, Action)>) -> usize {
    let mut best: Option<(usize, f64, u8)> = None;
    for (j, (v, a)) in scores.enumerate() {
        let rank = a.tie_rank();
        let better = match best {
            None => true,
            Some((_, bv, br)) => v < bv || (v == bv && rank < br),
        };
        if better {
            best = Some((j, v, rank));
        }
    }
    best.map(|b| b.0).unwrap_or(0)
}

/// Per-language argmin over candidates: `α[ℓ] = candidate[ĵ_ℓ][ℓ]`.
pub fn select_per_language(space: &SearchSpace, results: &TrialResults) -> Result<Selection, StrategyError> {
    check_dims(space, results)?;
    let c = space.candidates();
    let l = space.num_languages();
    let mut actions = Vec::with_capacity(l);
    let mut alpha = Vec::with_capacity(l);
    for lang in 0..l {
        let j = argmin_with_ties(results.rows().iter().zip(c).map(|(r, cand)| (r[lang], cand.actions[lang])));
        actions.push(c[j].actions[lang]);
        alpha.push(c[j].alpha[lang]);
    }
    Ok(Selection { actions, alpha })
}

/// One move for every language: the candidate whose row mean is smallest.
/// Candidates must be uniform moves (the sub-space).
pub fn select_uniform(space: &SearchSpace, results: &TrialResults) -> Result<Selection, StrategyError> {
    check_dims(space, results)?;
    let c = space.candidates();
    let means = results.row_means();
    let j = argmin_with_ties(means.iter().zip(c).map(|(&m, cand)| (m, cand.actions[0])));
    Ok(Selection {
        actions: c[j].actions.clone(),
        alpha: c[j].alpha.clone(),
    })
}
