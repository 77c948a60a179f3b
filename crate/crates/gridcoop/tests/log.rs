use gridcoop::log::{log_digest, read_log, replay, write_log, LogError, ReplayError};
use gridcoop_core::plan_cache::MemoryStore;
use gridcoop_core::sim::{run_match, MatchConfig, MatchRun};
use gridcoop_core::torus::Dims;
use gridcoop_core::world::WorldConfig;
use proptest::prelude::*;

const GOLDEN: &[u8] = include_bytes!("../fixtures/golden.log");

fn small() -> MatchConfig {
    let mut cfg = MatchConfig::new(WorldConfig::standard(Dims::new(20, 20).unwrap(), 4), 11);
    cfg.steps = 25;
    cfg
}

fn play(cfg: &MatchConfig) -> MatchRun {
    run_match(cfg, &mut MemoryStore::new(), |_, _| {}).unwrap()
}

#[test]
fn replay_reproduces_the_report() {
    let cfg = small();
    let run = play(&cfg);
    let (bytes, digest) = write_log(&cfg, &run.records, &run.report);
    assert_eq!(replay(&bytes).unwrap(), run.report);
    let log = read_log(&bytes).unwrap();
    assert_eq!(log.header.config, cfg);
    assert_eq!(log.records, run.records);
    assert_eq!(log.digest, digest);
}

#[test]
fn same_seed_same_digest() {
    let cfg = small();
    let a = play(&cfg);
    let b = play(&cfg);
    assert_eq!(log_digest(&cfg, &a.records, &a.report), log_digest(&cfg, &b.records, &b.report));
    let mut other = cfg.clone();
    other.seed += 1;
    let c = play(&other);
    assert_ne!(log_digest(&cfg, &a.records, &a.report), log_digest(&other, &c.records, &c.report));
}

#[test]
fn truncation_names_the_last_step() {
    let cfg = small();
    let run = play(&cfg);
    let (bytes, _) = write_log(&cfg, &run.records, &run.report);
    let lines: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    // header plus steps 0..=9
    let cut = lines[..11].join(&b'\n');
    assert_eq!(read_log(&cut), Err(LogError::Truncated { last_valid_step: Some(9) }));
    // a line cut in half fails its checksum
    let mut half = lines[..11].join(&b'\n');
    half.extend_from_slice(b"\n");
    half.extend_from_slice(&lines[11][..lines[11].len() / 2]);
    assert_eq!(read_log(&half), Err(LogError::Checksum { line: 12, last_valid_step: Some(9) }));
}

#[test]
fn doctored_report_is_a_mismatch() {
    let cfg = small();
    let run = play(&cfg);
    let mut fake = run.report.clone();
    fake.scores[0] += 10;
    let (bytes, _) = write_log(&cfg, &run.records, &fake);
    match replay(&bytes) {
        Err(ReplayError::Mismatch { recorded, recomputed }) => {
            assert_eq!(*recorded, fake);
            assert_eq!(*recomputed, run.report);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn golden_log_replays_and_reruns_identically() {
    let log = read_log(GOLDEN).unwrap();
    assert_eq!(replay(GOLDEN).unwrap(), log.report);
    let run = play(&log.header.config);
    assert_eq!(run.records, log.records);
    assert_eq!(log_digest(&log.header.config, &run.records, &run.report), log.digest);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn any_flipped_byte_fails_the_checksum(pos in 0usize..GOLDEN.len(), mask in 1u8..=255) {
        let mut bytes = GOLDEN.to_vec();
        bytes[pos] ^= mask;
        match read_log(&bytes) {
            Err(LogError::Checksum { .. }) => {}
            other => prop_assert!(false, "byte {} mask {:#x}: {:?}", pos, mask, other.map(|l| l.digest)),
        }
    }
}
