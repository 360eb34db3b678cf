mod support;

use ftcbf::automata::{check_letters, select_accepting_run};
use ftcbf::harness::Scenario;
use ftcbf::BeliefState;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn shortest_lasso_matches_enumeration() {
    let mut rng = support::rng(21);
    let mut satisfiable = 0;
    for trial in 0..100 {
        let n = rng.random_range(2..=20);
        let k = rng.random_range(1..=2);
        let dra = support::random_dra(&mut rng, n, k);
        match (select_accepting_run(&dra), support::brute_force_lasso(&dra)) {
            (Ok(run), Some((states, loop_start, pair))) => {
                satisfiable += 1;
                assert_eq!((run.states.clone(), run.loop_start, run.pair), (states, loop_start, pair), "trial {trial}");
                assert!(run.is_valid(&dra));
            }
            (Err(_), None) => {}
            (got, want) => panic!("trial {trial}: library {got:?}, enumeration {want:?}"),
        }
    }
    assert!(satisfiable >= 50, "{satisfiable}");
}

#[test]
fn fixture_runs() {
    let (dra, run) = support::chain_dra();
    assert_eq!(dra.state_names()[run.states[run.loop_start]], "acc");
    assert_eq!(run.loop_start, 2);
    let (_, run) = support::detour_dra();
    assert_eq!((run.states.clone(), run.loop_start), (vec![0, 1, 2], 2));
}

#[test]
fn verdicts_match_hand_oracles() {
    let cases = support::trace_cases();
    assert_eq!(cases.len(), 20);
    for (dra, run, letters, want) in &cases {
        assert_eq!(check_letters(letters, run, dra), *want, "{:?} {letters:?}", dra.state_names());
    }
}

#[test]
fn case_study_decomposes_into_three_reach_avoid_tasks() {
    let scenario = Scenario::load(&support::scenario_path("case_study.json")).unwrap();
    assert_eq!(support::check_case_study_letters(&scenario), Ok(3));
}

/// Barrier signs agree with the letter algebra on sampled beliefs: the
/// safety barrier is nonnegative exactly on stay or advance letters, and
/// inside it the goal barrier is nonnegative only on advance letters.
#[test]
fn subtask_barriers_agree_with_letters() {
    let scenario = Scenario::load(&support::scenario_path("case_study.json")).unwrap();
    let run = select_accepting_run(&scenario.dra).unwrap();
    let tasks = scenario.subtasks(&run).unwrap();
    let mut rng = support::rng(17);
    let mut hits = [0usize; 3];
    for _ in 0..20_000 {
        let x = DVector::from_fn(6, |i, _| match i % 3 {
            0 => rng.random_range(-2.0..11.0),
            1 => rng.random_range(-7.0..7.0),
            _ => rng.random_range(-3.2..3.2),
        });
        let p = DMatrix::identity(6, 6) * rng.random_range(0.0..0.3);
        let b = BeliefState::new(x, p);
        let letter = scenario.labeler.label(&b);
        for task in &tasks {
            let h = task.safety.value(&b);
            let d = task.goal.value(&b);
            if h.abs() < 1e-9 || d.abs() < 1e-9 {
                continue;
            }
            assert_eq!(h >= 0.0, task.safe_letter(letter), "letter {letter:#b}");
            if h >= 0.0 {
                assert_eq!(d >= 0.0, task.advance_letters.contains(&letter), "letter {letter:#b}");
                hits[0] += 1;
                if d >= 0.0 {
                    hits[1] += 1;
                }
            } else {
                hits[2] += 1;
            }
        }
    }
    assert!(hits.iter().all(|&h| h > 100), "{hits:?}");
}
