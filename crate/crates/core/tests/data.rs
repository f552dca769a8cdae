use std::collections::HashSet;

use marginflat::data::{
    batches, generate_toy_corpus, load_corpus, save_corpus, BatchSampler, CorpusSpec,
};
use marginflat::Error;

#[test]
fn corpus_survives_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.txt");
    let c = generate_toy_corpus(&CorpusSpec::desk_default(), 21).unwrap();
    save_corpus(&c, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), c);
}

#[test]
fn malformed_file_names_path_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(
        &path,
        "# vocab_size = 8\n1 2 | 3 | forget\n1 2 3 | retain\n",
    )
    .unwrap();
    match load_corpus(&path) {
        Err(e @ Error::Parse { line: 3, .. }) => {
            assert!(e.to_string().contains("bad.txt:3"), "{e}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn every_epoch_covers_the_forget_split_once() {
    let c = generate_toy_corpus(&CorpusSpec::desk_default(), 2).unwrap();
    let mut sampler = BatchSampler::new(&c, 3, 32, 5).unwrap();
    assert_eq!(sampler.batches_per_epoch(), 7);
    for _ in 0..4 {
        let epoch = sampler.epoch();
        assert_eq!(epoch.len(), 7);
        let seen: Vec<_> = epoch.iter().flat_map(|b| b.forget.iter()).collect();
        assert_eq!(seen.len(), 20);
        assert_eq!(seen.iter().collect::<HashSet<_>>().len(), 20);
        assert!(epoch.iter().all(|b| b.retain.len() == 32));
    }
}

#[test]
fn retain_batches_cycle_through_the_whole_split() {
    let c = generate_toy_corpus(&CorpusSpec::desk_default(), 2).unwrap();
    // 180 retain examples / 30 per batch: 6 batches per pass, no repeats within a pass.
    let all = batches(&c, 20, 30, 9, 6).unwrap();
    let first_pass: Vec<_> = all.iter().flat_map(|b| b.retain.iter()).collect();
    assert_eq!(first_pass.iter().collect::<HashSet<_>>().len(), 180);
}

#[test]
fn batching_is_seeded() {
    let c = generate_toy_corpus(&CorpusSpec::desk_default(), 2).unwrap();
    assert_eq!(
        batches(&c, 1, 32, 4, 3).unwrap(),
        batches(&c, 1, 32, 4, 3).unwrap()
    );
    assert_ne!(
        batches(&c, 1, 32, 4, 3).unwrap(),
        batches(&c, 1, 32, 5, 3).unwrap()
    );
    assert!(BatchSampler::new(&c, 0, 32, 4).is_err());
}
