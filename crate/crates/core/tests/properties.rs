mod support;

use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use warnmend_core::analyzer::{analyze, honor_suppressions, AnalyzerConfig, SuppressionSyntax};
use warnmend_core::approver::diff_warnings;
use warnmend_core::edit::{apply_fix, apply_to_text, compose_shift, FixSpec, LineShiftMap};
use warnmend_core::gateway::{cost, LanguageModel, PricingModel, ScriptedGateway, TokenUsage};
use warnmend_core::workspace::{ProjectHandle, ProjectProfile};

use support::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn line_map_matches_token_oracle(seed in any::<u64>()) {
        let result = line_map_case(&mut rng(seed));
        prop_assert!(result.is_ok(), "{:?}", result);
    }

    #[test]
    fn surviving_lines_keep_order_and_maps_are_inverse(seed in any::<u64>()) {
        let mut r = rng(seed);
        let lines = random_lines(&mut r);
        let edit = random_edit(&mut r, "F", lines.len());
        let (_, map) = apply_to_text(&(lines.join("\n") + "\n"), &edit);
        let defined: Vec<u32> = map.forward_entries().iter().flatten().copied().collect();
        prop_assert!(defined.windows(2).all(|w| w[0] < w[1]));
        for (i, f) in map.forward_entries().iter().enumerate() {
            if let Some(m) = f {
                prop_assert_eq!(map.backward(*m), Some(i as u32 + 1));
            }
        }
        // Between two consecutive edit points every line moves by the same offset.
        let mut points: Vec<u32> = edit.deletions.clone();
        points.extend(edit.insertions.iter().map(|i| i.line_number));
        for l in 1..lines.len() as u32 {
            let untouched = !points.contains(&l) && !points.contains(&(l + 1));
            if untouched {
                let (a, b) = (map.forward(l).unwrap(), map.forward(l + 1).unwrap());
                prop_assert_eq!(b, a + 1);
            }
        }
    }

    #[test]
    fn composition_matches_sequential_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let lines = random_lines(&mut r);
        let first = random_edit(&mut r, "F", lines.len());
        let once = token_oracle(&lines, &first);
        prop_assume!(!once.lines.is_empty());
        let second = random_edit(&mut r, "F", once.lines.len());
        let twice = token_oracle(&once.lines, &second);

        let (mid, a) = apply_to_text(&(lines.join("\n") + "\n"), &first);
        let (_, b) = apply_to_text(&mid, &second);
        let composed = compose_shift(&a, &b).unwrap();
        let expected_forward: Vec<Option<u32>> =
            once.forward.iter().map(|f| f.and_then(|m| twice.forward[m as usize - 1])).collect();
        let expected_backward: Vec<Option<u32>> =
            twice.backward.iter().map(|b| b.and_then(|m| once.backward[m as usize - 1])).collect();
        prop_assert_eq!(composed.forward_entries(), expected_forward.as_slice());
        prop_assert_eq!(composed.backward_entries(), expected_backward.as_slice());
    }

    #[test]
    fn diff_reports_every_injected_warning(seed in any::<u64>()) {
        let case = diff_case(&mut rng(seed));
        let diff = diff_warnings(&case.before, &case.after, &case.target, &case.maps);
        let misses = missed(&case.injected, &diff.new_warnings);
        prop_assert!(misses.is_empty(), "missed {:?}", misses);
        prop_assert_eq!(diff.new_warnings.len(), case.injected.len());
    }

    #[test]
    fn unchanged_report_is_neither_fixed_nor_worse(seed in any::<u64>()) {
        let case = diff_case(&mut rng(seed));
        let diff = diff_warnings(&case.before, &case.before, &case.target, &BTreeMap::new());
        prop_assert!(!diff.target_removed);
        prop_assert!(diff.new_warnings.is_empty());
    }

    #[test]
    fn cost_is_linear_and_monotone(
        a in (0u64..10_000_000, 0u64..10_000_000, 0u64..1_000_000),
        b in (0u64..10_000_000, 0u64..10_000_000, 0u64..1_000_000),
    ) {
        let p = PricingModel::default();
        let ua = TokenUsage::new(a.0, a.1, a.2);
        let ub = TokenUsage::new(b.0, b.1, b.2);
        let sum = cost(&(ua + ub), &p);
        prop_assert!((sum - (cost(&ua, &p) + cost(&ub, &p))).abs() < 1e-9);
        prop_assert!(sum >= cost(&ua, &p));
        prop_assert!(cost(&ua, &p) >= 0.0);
    }

    #[test]
    fn replay_is_deterministic(responses in prop::collection::vec("[a-z ]{1,20}", 1..8), prompts in prop::collection::vec("[a-z]{1,30}", 8)) {
        let g1 = ScriptedGateway::from_responses(responses.clone());
        let g2 = ScriptedGateway::parse(&g1.to_jsonl()).unwrap();
        for p in prompts.iter().take(responses.len()) {
            prop_assert_eq!(g1.complete(p).unwrap(), g2.complete(p).unwrap());
        }
    }

    #[test]
    fn suppression_only_drops_marked_lines(marks in prop::collection::vec(any::<bool>(), 1..40)) {
        let lines: Vec<String> = marks
            .iter()
            .enumerate()
            .map(|(i, &m)| if m { format!("int v{i}; //NOSONAR") } else { format!("int v{i};") })
            .collect();
        let warnings: Vec<_> = (1..=lines.len() as u32).map(|l| warning("F.java", "r1", l)).collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let kept = honor_suppressions(&refs, warnings.clone(), &SuppressionSyntax::default());
        for w in &warnings {
            let marked = marks[w.start_line as usize - 1];
            prop_assert_eq!(kept.contains(w), !marked);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn apply_then_rollback_restores_bytes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dir = tempfile::tempdir().unwrap();
        let mut files = Vec::new();
        for name in ["a/A.java", "B.java"] {
            let path = dir.path().join(name);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            let lines = random_lines(&mut r);
            fs::write(&path, lines.join("\n")).unwrap();
            files.push((name, lines.len(), fs::read(&path).unwrap()));
        }
        let mut handle = ProjectHandle::new(dir.path(), ProjectProfile::default());
        for _ in 0..3 {
            let mut edits = Vec::new();
            for (name, _, _) in &files {
                let current = fs::read_to_string(dir.path().join(name)).unwrap().lines().count();
                if current > 0 {
                    edits.push(random_edit(&mut r, name, current));
                }
            }
            prop_assume!(!edits.is_empty());
            let fix = FixSpec { files: edits };
            apply_fix(&mut handle, &fix).unwrap();
        }
        handle.rollback().unwrap();
        for (name, _, bytes) in &files {
            prop_assert_eq!(&fs::read(dir.path().join(name)).unwrap(), bytes);
        }
    }
}

#[test]
fn analysis_ignores_directory_creation_order() {
    let content = [("b/Z.java", "int a;\t\n"), ("a/Y.java", "x  \n\n\n// TODO later\n")];
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    for (name, text) in content {
        let p = one.path().join(name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }
    for (name, text) in content.iter().rev() {
        let p = two.path().join(name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }
    let cfg = AnalyzerConfig::default();
    let a = analyze(one.path(), &cfg).unwrap();
    let b = analyze(two.path(), &cfg).unwrap();
    assert_eq!(a, b);
    // Tab and trailing whitespace on Z:1; trailing whitespace, double blank and TODO in Y.
    assert_eq!(a.len(), 5);
}

#[test]
fn identity_map_is_neutral_for_composition() {
    let lines = (0..12).map(|i| format!("l{i}")).collect::<Vec<_>>();
    let mut r = rng(7);
    let edit = random_edit(&mut r, "F", lines.len());
    let (_, map) = apply_to_text(&(lines.join("\n") + "\n"), &edit);
    let left = compose_shift(&LineShiftMap::identity(12), &map).unwrap();
    let right = compose_shift(&map, &LineShiftMap::identity(map.modified_len())).unwrap();
    assert_eq!(left, map);
    assert_eq!(right, map);
}
