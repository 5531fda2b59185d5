use pmd_core::corpus::{dump, generate, header_path, load, CorpusError, CorpusSpec};

#[test]
fn unrelated_ciphers_overlap_at_chance() {
    let alphabet = 24;
    let (mut shared, mut total) = (0usize, 0usize);
    for seed in 0..300 {
        let spec = CorpusSpec {
            relatedness: 0.0,
            sizes: vec![80, 80, 80, 80],
            valid_size: 16,
            seed,
            ..CorpusSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let root = &corpus.language(0).unwrap().cipher;
        for lang in &corpus.languages()[1..] {
            shared += lang.cipher.iter().zip(root).filter(|(a, b)| a == b).count();
            total += alphabet;
        }
    }
    let frac = shared as f64 / total as f64;
    let chance = 1.0 / alphabet as f64;
    assert!((frac - chance).abs() < 0.01, "overlap {frac} vs {chance}");
}

#[test]
fn corrupted_dump_reports_the_line() {
    let spec = CorpusSpec {
        sizes: vec![60, 40],
        num_languages: 2,
        valid_size: 16,
        ..CorpusSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("corpus.tsv");
    dump(&corpus, &data).unwrap();
    assert!(header_path(&data).exists());
    assert_eq!(load(&data).unwrap(), corpus);

    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2] = "0\t1 2\t3".into();
    std::fs::write(&data, lines.join("\n")).unwrap();
    match load(&data) {
        Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}
