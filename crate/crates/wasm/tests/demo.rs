use topk_bandit_wasm::{
    epsilon_values, regret_chart_svg, simulate_regret, slate_picks, MAX_HORIZON,
};

#[test]
fn chart_has_one_line_per_policy() {
    let svg = regret_chart_svg("random,greedy", "linear", 20, 3, 300, 1).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">random/linear<") && svg.contains(">greedy/linear<"));
    assert_eq!(
        svg,
        regret_chart_svg("random,greedy", "linear", 20, 3, 300, 1).unwrap()
    );
}

#[test]
fn learning_beats_random_on_the_synthetic_arms() {
    let runs = simulate_regret("random, greedy", "linear", 20, 3, 400, 2).unwrap();
    assert_eq!(runs.len(), 2);
    let random = runs[0].1.last().unwrap();
    let greedy = runs[1].1.last().unwrap();
    assert!(greedy < random, "greedy {greedy}, random {random}");
}

#[test]
fn bad_requests_are_errors() {
    assert!(simulate_regret("", "linear", 20, 3, 10, 1).is_err());
    assert!(simulate_regret("greedy", "cnn", 20, 3, 10, 1).is_err());
    assert!(simulate_regret("greedy", "linear", 3, 5, 10, 1).is_err());
    assert!(simulate_regret("greedy", "linear", 20, 3, MAX_HORIZON + 1, 1).is_err());
    assert!(simulate_regret("sometimes", "linear", 20, 3, 10, 1).is_err());
}

#[test]
fn schedule_values() {
    let eps = epsilon_values("decaying_epsilon", 0.05, 100.0, 900).unwrap();
    assert_eq!(eps.len(), 900);
    assert!((eps[0] - 0.05 * 100.0 / 101.0).abs() < 1e-15);
    assert!((eps[899] - 0.005).abs() < 1e-15);
    assert!(epsilon_values("greedy", 0.05, 100.0, 5)
        .unwrap()
        .iter()
        .all(|&e| e == 0.0));
    assert!(epsilon_values("epsilon_greedy", 1.5, 100.0, 5).is_err());
}

#[test]
fn greedy_slate_follows_the_scores() {
    let picks = slate_picks(&[0.9, 0.5, 0.7, 0.1], 2, "greedy", 0.0, 1).unwrap();
    assert_eq!(picks, vec![0, 2]);
    let picks = slate_picks(&[1.0; 5], 5, "random", 0.0, 3).unwrap();
    let mut sorted = picks.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    assert!(slate_picks(&[1.0, 2.0], 3, "greedy", 0.0, 1).is_err());
}
