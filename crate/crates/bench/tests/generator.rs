use staxray_bench::generator::{generate_scene, GeneratorConfig};
use staxray_core::scene::validate_scene;
use staxray_core::simulator::Environment;

#[test]
fn sixteen_occluders_fit_for_nearly_every_seed() {
    let env = Environment::default_shelf();
    let cfg = GeneratorConfig::with_n(16);
    let mut ok = 0;
    for seed in 0..200 {
        if let Ok(s) = generate_scene(&cfg, &env.renderer, seed) {
            assert!(validate_scene(&s).is_ok());
            assert_eq!(s.occluder_count(), 16);
            assert_eq!(env.renderer.render(&s).target_visibility(), 0.0);
            ok += 1;
        }
    }
    assert!(ok >= 190, "only {ok}/200 seeds generated within budget");
}

#[test]
fn every_table_size_generates_hidden_targets() {
    let env = Environment::default_shelf();
    for n in [6, 8, 10, 12, 14] {
        for seed in 0..5 {
            let s = generate_scene(&GeneratorConfig::with_n(n), &env.renderer, seed).unwrap();
            assert_eq!(s.occluder_count(), n);
            assert_eq!(env.renderer.render(&s).target_visibility(), 0.0);
        }
    }
}
