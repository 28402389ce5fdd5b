use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::actions::{gen_all, Action, ActionConfig, ActionKind};
use crate::observer::Outcome;
use crate::occupancy::{AspectRatio, OutcomeProbabilities};
use crate::scene::{ObjectId, ObjectInstance, ObjectShape, Pose, SceneState, ShelfSpec};
use crate::simulator::{apply, hypothesize_mask, run_episode, EpisodeConfig, Environment, TerminalReason};
use crate::testing::{behind_stack_fixture, exhaustive_plan_length, random_scene, small_oracle_fixtures};

fn cube(id: ObjectId, s: f64, x: f64, y: f64) -> ObjectInstance {
    ObjectInstance::new(id, ObjectShape::cuboid(s, s, s), Pose::new(x, y, 0.0))
}

fn target(x: f64, y: f64) -> ObjectInstance {
    ObjectInstance::target(0, ObjectShape::cuboid(0.06, 0.06, 0.06), Pose::new(x, y, 0.0))
}

fn scene(objects: Vec<ObjectInstance>, support: &[(ObjectId, ObjectId)]) -> SceneState {
    SceneState::from_parts(ShelfSpec::default(), objects, support)
}

fn all(_: ObjectId) -> bool {
    true
}

fn env() -> Environment {
    Environment::default_shelf()
}

#[test]
fn ranking_sorts_by_score_then_canonical_order() {
    let s = scene(vec![cube(1, 0.1, 0.0, 0.0), cube(2, 0.1, 0.25, 0.0)], &[]);
    let actions = gen_all(&s, &all, &ActionConfig::default());
    let mut scores = vec![0.0; actions.len()];
    scores[1] = 0.3;
    scores[3] = 0.8;
    let ranked = rank_by_scores(&actions, &scores);
    assert_eq!(ranked[0].score, 0.8);
    assert_eq!(ranked[0].action, actions[3]);
    assert_eq!(ranked[1].action, actions[1]);
    let rest: Vec<Action> = ranked[2..].iter().map(|r| r.action).collect();
    let expected: Vec<Action> = actions.iter().enumerate().filter(|(i, _)| *i != 1 && *i != 3).map(|(_, a)| *a).collect();
    assert_eq!(rest, expected);
}

/// Mass on the image columns of `cols` only.
fn band(width: usize, cols: std::ops::Range<usize>) -> Vec<f64> {
    (0..width).map(|c| if cols.contains(&c) { 1.0 } else { 0.0 }).collect()
}

#[test]
fn darss_penalizes_moving_into_the_distribution() {
    let env = env();
    let s = scene(vec![target(0.0, -0.2), ObjectInstance::new(1, ObjectShape::cuboid(0.12, 0.06, 0.14), Pose::new(0.0, 0.0, 0.0)), cube(2, 0.06, -0.3, 0.1)], &[]);
    let obs = env.renderer.render(&s);
    let (l, r) = obs.object_column_extent(1).unwrap();
    let dist = band(obs.width(), l..r + 1);
    let actions = gen_all(&s, &|id| obs.is_visible(id), &ActionConfig::default());
    let scores = darss_scores(&env.renderer, &s, &obs, &dist, &actions);
    let best_blocker = actions.iter().zip(&scores).filter(|(a, _)| a.subject == 1).map(|(_, s)| *s).fold(f64::MIN, f64::max);
    assert!(best_blocker > 0.0);
    let into = actions
        .iter()
        .zip(&scores)
        .filter(|(a, _)| a.subject == 2 && a.kind == ActionKind::Rearrange && a.place.x.abs() < 0.05 && a.place.y > 0.0)
        .map(|(_, s)| *s)
        .next()
        .expect("object 2 can be placed in front of the blocker");
    assert!(into < 0.0, "{into}");
    let ranked = rank_by_scores(&actions, &scores);
    let pos = |pred: &dyn Fn(&Scored) -> bool| ranked.iter().position(|r| pred(r)).unwrap();
    let zero = pos(&|r| r.score == 0.0);
    let negative = pos(&|r| r.score == into);
    assert!(zero < negative);
}

#[test]
fn darss_ties_keep_canonical_order() {
    let env = env();
    let s = scene(vec![target(0.3, -0.2), cube(1, 0.1, -0.1, 0.0), cube(2, 0.08, 0.1, 0.1)], &[]);
    let obs = env.renderer.render(&s);
    let actions = gen_all(&s, &|id| obs.is_visible(id), &ActionConfig::default());
    let scores = darss_scores(&env.renderer, &s, &obs, &vec![0.0; obs.width()], &actions);
    assert!(scores.iter().all(|s| *s == 0.0));
    let ranked: Vec<Action> = rank_by_scores(&actions, &scores).into_iter().map(|r| r.action).collect();
    assert_eq!(ranked, actions);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn darss_ranking_is_scale_invariant(seed in any::<u64>()) {
        let env = env();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scene(&mut rng, 8, true);
        let obs = env.renderer.render(&s);
        let dist = env.occupancy.compute(&obs, AspectRatio::OneToOne, AspectRatio::OneToOne);
        let actions = gen_all(&s, &|id| obs.is_visible(id), &ActionConfig::default());
        let order = |c: f64| -> Vec<Action> {
            let scaled: Vec<f64> = dist.iter().map(|m| c * m).collect();
            rank_by_scores(&actions, &darss_scores(&env.renderer, &s, &obs, &scaled, &actions)).into_iter().map(|r| r.action).collect()
        };
        let base = order(1.0);
        prop_assert_eq!(&order(0.1), &base);
        prop_assert_eq!(&order(10.0), &base);
    }

    #[test]
    fn baseline_never_ranks_a_lower_score_first(seed in any::<u64>()) {
        let env = env();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scene(&mut rng, 8, true);
        let obs = env.renderer.render(&s);
        let actions = gen_all(&s, &|id| obs.is_visible(id), &ActionConfig::default());
        let scores = baseline_scores(&env.renderer, &s, &obs, &actions);
        let ranked = rank_by_scores(&actions, &scores);
        for w in ranked.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn fast_visibility_matches_full_render(seed in any::<u64>()) {
        let env = env();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scene(&mut rng, 10, true);
        prop_assert_eq!(target_visibility(&env.renderer, &s), env.renderer.render(&s).target_visibility());
    }
}

#[test]
fn baseline_scores_mask_area_minus_overlap() {
    let env = env();
    let wall = ObjectInstance::new(2, ObjectShape::cuboid(0.5, 0.05, 0.3), Pose::new(0.1, -0.15, 0.0));
    let s = scene(vec![target(0.1, -0.22), cube(1, 0.06, -0.3, 0.15), wall], &[]);
    assert!(crate::scene::validate_scene(&s).is_ok());
    let obs = env.renderer.render(&s);
    let area = obs.mask_area(1) as f64;
    assert!(area > 0.0);
    let cfg = ActionConfig::default();
    let actions = gen_all(&s, &|id| obs.is_visible(id), &cfg);
    let scores = baseline_scores(&env.renderer, &s, &obs, &actions);
    let mut saw_disjoint = false;
    let mut saw_overlap = false;
    for (a, score) in actions.iter().zip(&scores).filter(|(a, _)| a.subject == 1) {
        let hyp = hypothesize_mask(&env.renderer, &s, &obs, a);
        saw_disjoint |= hyp.overlap_others == 0;
        saw_overlap |= hyp.overlap_others > 0;
        assert_eq!(*score, area - hyp.overlap_others as f64);
    }
    assert!(saw_disjoint && saw_overlap);
    // no-op: the current masks are disjoint
    let mut noop = actions.iter().find(|a| a.subject == 1).copied().unwrap();
    noop.place = s.object(1).unwrap().pose;
    assert_eq!(baseline_scores(&env.renderer, &s, &obs, &[noop])[0], area);
}

/// Root actions with fixed reveal probabilities; every other outcome leads
/// to a node with the same actions.
struct Fixed(Vec<f64>);

impl RolloutModel for Fixed {
    type Node = ();
    fn num_actions(&self, _: &()) -> usize {
        self.0.len()
    }
    fn probabilities(&self, _: &(), a: usize) -> OutcomeProbabilities {
        let p = self.0[a];
        OutcomeProbabilities { target: p, back_wall: (1.0 - p) / 2.0, other: (1.0 - p) / 2.0 }
    }
    fn expand(&self, _: &(), _: usize, _: Outcome, _: usize) -> Option<()> {
        Some(())
    }
}

#[test]
fn certain_reveal_credits_gamma_per_rollout() {
    let cfg = MctsConfig { k_max: 2, rollouts: 300, gamma: 0.9 };
    let scores = run_rollouts(&Fixed(vec![1.0, 1.0, 1.0]), (), &cfg, 5);
    for s in &scores {
        let k = s / 0.9;
        assert!((k - k.round()).abs() < 1e-9, "{s}");
    }
    assert!((scores.iter().sum::<f64>() - 0.9 * 300.0).abs() < 1e-9);
}

#[test]
fn single_rollout_touches_one_root_action() {
    let cfg = MctsConfig { k_max: 3, rollouts: 1, gamma: 0.9 };
    let scores = run_rollouts(&Fixed(vec![1.0; 7]), (), &cfg, 9);
    assert_eq!(scores.iter().filter(|s| **s != 0.0).count(), 1);
}

#[test]
fn deeper_reveals_are_discounted() {
    // reveal only ever happens at the second level
    struct Late;
    impl RolloutModel for Late {
        type Node = usize;
        fn num_actions(&self, _: &usize) -> usize {
            1
        }
        fn probabilities(&self, depth: &usize, _: usize) -> OutcomeProbabilities {
            let p = if *depth == 0 { 0.0 } else { 1.0 };
            OutcomeProbabilities { target: p, back_wall: 1.0 - p, other: 0.0 }
        }
        fn expand(&self, _: &usize, _: usize, _: Outcome, depth: usize) -> Option<usize> {
            Some(depth)
        }
    }
    let scores = run_rollouts(&Late, 0, &MctsConfig { k_max: 2, rollouts: 10, gamma: 0.5 }, 1);
    assert!((scores[0] - 10.0 * 0.25).abs() < 1e-12);
    let scores = run_rollouts(&Late, 0, &MctsConfig { k_max: 1, rollouts: 10, gamma: 0.5 }, 1);
    assert_eq!(scores[0], 0.0);
}

#[test]
fn one_level_search_prefers_the_likelier_reveal() {
    // expected scores: M/2 * gamma * p, i.e. 810 versus 90 at M = 2000
    let cfg = MctsConfig { k_max: 1, rollouts: 2000, gamma: 0.9 };
    let model = Fixed(vec![0.9, 0.1]);
    let wins = (0..20u64).filter(|seed| {
        let s = run_rollouts(&model, (), &cfg, 1000 + seed);
        s[0] > s[1]
    });
    let wins = wins.count() as u32;
    // one-sided sign test: P(X >= wins) under Binomial(20, 1/2)
    let tail: f64 = (wins..=20).map(|k| binomial(20, k)).sum::<f64>() / 2f64.powi(20);
    assert!(tail < 0.01, "wins {wins}, p = {tail}");
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn rollouts_do_not_depend_on_thread_count() {
    let cfg = MctsConfig { k_max: 3, rollouts: 500, gamma: 0.9 };
    let model = Fixed(vec![0.2, 0.5, 0.05, 0.3]);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_rollouts(&model, (), &cfg, 77));
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_rollouts(&model, (), &cfg, 77));
    assert_eq!(one, four);
    assert_ne!(one, run_rollouts(&model, (), &cfg, 78));
}

#[test]
fn mcts_config_is_validated() {
    assert!(Mctsss::new(MctsConfig { k_max: 0, ..Default::default() }).is_err());
    assert!(Mctsss::new(MctsConfig { rollouts: 0, ..Default::default() }).is_err());
    assert!(Mctsss::new(MctsConfig { gamma: 1.5, ..Default::default() }).is_err());
    assert_eq!(Mctsss::new(MctsConfig::default()).unwrap().name(), "MCTSSS(2,500)");
}

#[test]
fn mcts_on_images_moves_the_only_blocker() {
    let env = env();
    let s = scene(vec![target(0.0, -0.1), ObjectInstance::new(1, ObjectShape::cuboid(0.14, 0.06, 0.14), Pose::new(0.0, 0.0, 0.0)), cube(2, 0.05, 0.3, 0.15)], &[]);
    let mut policy = Mctsss::new(MctsConfig { k_max: 2, rollouts: 200, gamma: 0.9 }).unwrap();
    let rec = run_episode(&s, &mut policy, &EpisodeConfig::new(2, 3), &env).unwrap();
    assert!(rec.success);
    assert_eq!(rec.trace[0].action.subject, 1);
}

#[test]
fn oracle_plans_are_empty_or_short_on_simple_scenes() {
    let env = env();
    let cfg = ActionConfig::default();
    let visible = scene(vec![target(0.0, 0.0)], &[]);
    let plan = oracle_plan(&env.renderer, &visible, 0.8, 4, &cfg, AblationMode::Full, &OracleConfig::default()).unwrap();
    assert!(plan.actions.is_empty());
    let blocked = scene(vec![target(0.0, -0.1), ObjectInstance::new(1, ObjectShape::cuboid(0.14, 0.06, 0.14), Pose::new(0.0, 0.0, 0.0))], &[]);
    let plan = oracle_plan(&env.renderer, &blocked, 0.8, 4, &cfg, AblationMode::Full, &OracleConfig::default()).unwrap();
    assert_eq!(plan.actions.len(), 1);
    let after = apply(&blocked, &plan.actions[0], &cfg).unwrap();
    assert!(env.renderer.render(&after).target_visibility() >= 0.8);
}

#[test]
fn oracle_matches_exhaustive_search_on_small_scenes() {
    let env = env();
    let cfg = ActionConfig::default();
    let mut compared = 0;
    let mut deeper = 0;
    for (seed, s) in small_oracle_fixtures(&env.renderer, 0.8, 30).into_iter().enumerate() {
        if target_visibility(&env.renderer, &s) >= 0.8 {
            continue;
        }
        let Some(best) = exhaustive_plan_length(&env.renderer, &s, 0.8, 3, &cfg) else { continue };
        let plan = oracle_plan(&env.renderer, &s, 0.8, 3, &cfg, AblationMode::Full, &OracleConfig::default())
            .expect("a plan exists within the exhaustive bound");
        assert_eq!(plan.actions.len(), best, "seed {seed}");
        // the plan really works
        let mut cur = s.clone();
        for a in &plan.actions {
            cur = apply(&cur, a, &cfg).unwrap();
        }
        assert!(env.renderer.render(&cur).target_visibility() >= 0.8);
        compared += 1;
        deeper += usize::from(best >= 2);
    }
    assert!(compared >= 20, "only {compared} fixtures");
    assert!(deeper >= 1, "no fixture needed more than one action");
}

#[test]
fn oracle_policy_replays_its_plan() {
    let env = env();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let s = random_scene(&mut rng, 8, true);
        let mut oracle = Oracle::new(OracleConfig::default());
        let rec = run_episode(&s, &mut oracle, &EpisodeConfig::new(16, 0), &env).unwrap();
        let planned = oracle_plan(&env.renderer, &s, 0.8, 16, &ActionConfig::default(), AblationMode::Full, &OracleConfig::default());
        if let Some(p) = planned {
            assert!(rec.success);
            assert_eq!(rec.steps, p.actions.len());
        }
    }
}

#[test]
fn ablation_filters_drop_the_right_kinds() {
    let base = cube(1, 0.12, -0.2, 0.0);
    let top = ObjectInstance::new(2, ObjectShape::cuboid(0.06, 0.06, 0.05), Pose::new(-0.2, 0.0, 0.12));
    let s = scene(vec![base, top, cube(3, 0.08, 0.2, 0.0)], &[(2, 1)]);
    let actions = gen_all(&s, &all, &ActionConfig::default());
    let kinds = |m: AblationMode| {
        let mut k: Vec<ActionKind> = ablation_filter(actions.clone(), m).iter().map(|a| a.kind).collect();
        k.dedup();
        k
    };
    use ActionKind::*;
    assert_eq!(ablation_filter(actions.clone(), AblationMode::Full), actions);
    assert_eq!(kinds(AblationMode::Full), vec![Push, Rearrange, Destack, Stack]);
    assert_eq!(kinds(AblationMode::NoStack), vec![Push, Rearrange, Destack]);
    assert_eq!(kinds(AblationMode::NoDestack), vec![Push, Rearrange, Stack]);
    assert_eq!(kinds(AblationMode::Dar), vec![Push, Rearrange]);
    assert_eq!(kinds(AblationMode::DarDestacked), vec![Push, Rearrange]);
}

#[test]
fn preprocessing_flattens_stacks_when_there_is_room() {
    let env = env();
    let s = scene(
        vec![
            target(0.3, -0.2),
            cube(1, 0.12, -0.25, 0.1),
            ObjectInstance::new(2, ObjectShape::cuboid(0.06, 0.06, 0.05), Pose::new(-0.25, 0.1, 0.12)),
            ObjectInstance::new(3, ObjectShape::cuboid(0.05, 0.05, 0.04), Pose::new(-0.25, 0.1, 0.17)),
            cube(4, 0.1, 0.05, 0.1),
            ObjectInstance::new(5, ObjectShape::cuboid(0.08, 0.08, 0.05), Pose::new(0.05, 0.1, 0.1)),
        ],
        &[(2, 1), (3, 2), (5, 4)],
    );
    let flat = destack_preprocess(&s, &env.renderer, &ActionConfig::default());
    assert!(crate::scene::validate_scene(&flat).is_ok());
    assert!(flat.objects().iter().all(|o| !flat.is_stacked(o.id)));
    assert_eq!(flat.objects().len(), s.objects().len());
}

#[test]
fn dar_cannot_reveal_a_target_behind_stacks() {
    let env = env();
    for k in 0..10 {
        let s = behind_stack_fixture(k);
        assert_eq!(env.renderer.render(&s).target_visibility(), 0.0);
        let cfg = EpisodeConfig { ablation: AblationMode::Dar, ..EpisodeConfig::new(8, k as u64) };
        let rec = run_episode(&s, &mut Darss, &cfg, &env).unwrap();
        assert!(!rec.success, "fixture {k}");
        assert_eq!(rec.terminal, TerminalReason::NoFeasibleAction);
        // the full action set does reveal it
        let full = run_episode(&s, &mut Darss, &EpisodeConfig::new(8, k as u64), &env).unwrap();
        assert!(full.success, "fixture {k}");
    }
}

#[test]
fn policy_specs_round_trip_and_build() {
    let specs = [
        PolicySpec::Darss,
        PolicySpec::Mctsss { k_max: 2, rollouts: 500, gamma: 0.9 },
        PolicySpec::Baseline,
        PolicySpec::Oracle,
    ];
    for spec in specs {
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<PolicySpec>(&text).unwrap(), spec);
        assert_eq!(spec.build().unwrap().name(), spec.label());
    }
    let defaulted: PolicySpec = serde_json::from_str(r#"{"kind":"MCTSSS"}"#).unwrap();
    assert_eq!(defaulted, PolicySpec::Mctsss { k_max: 2, rollouts: 500, gamma: 0.9 });
    let mode: AblationMode = serde_json::from_str(r#""DAR_DESTACKED_PREPROCESS""#).unwrap();
    assert_eq!(mode, AblationMode::DarDestacked);
}

