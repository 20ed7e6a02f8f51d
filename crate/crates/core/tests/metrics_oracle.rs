use darnn_core::data::Manoeuvre::{self, *};
use darnn_core::evaluation::{anticipate_probs, compute_metrics, AnticipationResult};

fn result(predicted: Manoeuvre, ttp: f64) -> AnticipationResult {
    AnticipationResult { predicted, t_star: None, ttp, len: 150, trajectory: Vec::new() }
}

/// Twelve samples with a hand-built confusion matrix.
///
/// | true \ pred | S | LL | LR | TL | TR |
/// |-------------|---|----|----|----|----|
/// | S           | 0 | 0  | 0  | 1  | 0  |
/// | LL          | 1 | 2  | 0  | 0  | 0  |
/// | LR          | 0 | 1  | 2  | 0  | 0  |
/// | TL          | 0 | 0  | 0  | 2  | 1  |
/// | TR          | 1 | 0  | 0  | 0  | 1  |
fn fixture() -> (Vec<AnticipationResult>, Vec<Manoeuvre>) {
    let rows = [
        (LaneLeft, LaneLeft, 4.0),
        (LaneLeft, LaneLeft, 3.0),
        (LaneLeft, Straight, 0.0),
        (LaneRight, LaneRight, 2.5),
        (LaneRight, LaneLeft, 3.9),
        (LaneRight, LaneRight, 1.0),
        (TurnLeft, TurnLeft, 3.5),
        (TurnLeft, TurnRight, 2.2),
        (TurnLeft, TurnLeft, 2.0),
        (TurnRight, TurnRight, 1.5),
        (TurnRight, Straight, 0.0),
        (Straight, TurnLeft, 4.5),
    ];
    let labels = rows.iter().map(|r| r.0).collect();
    let results = rows.iter().map(|r| result(r.1, r.2)).collect();
    (results, labels)
}

#[test]
fn twelve_sample_fixture_matches_hand_values() {
    let (results, labels) = fixture();
    let m = compute_metrics(&results, &labels).unwrap();

    // Per class (precision, recall):
    // LL 2/3, 2/3   LR 1, 2/3   TL 2/3, 2/3   TR 1/2, 1/2
    let expected = [(2.0 / 3.0, 2.0 / 3.0), (1.0, 2.0 / 3.0), (2.0 / 3.0, 2.0 / 3.0), (0.5, 0.5)];
    for (c, (p, r)) in m.per_class.iter().zip(expected) {
        assert!((c.precision - p).abs() < 1e-12, "{:?}", c);
        assert!((c.recall - r).abs() < 1e-12, "{:?}", c);
    }
    // Macro P = 17/24, macro R = 5/8, F1 = 85/128.
    assert!((m.precision - 17.0 / 24.0).abs() < 1e-12);
    assert!((m.recall - 5.0 / 8.0).abs() < 1e-12);
    assert!((m.f1 - 85.0 / 128.0).abs() < 1e-12);
    // Lane change: P = 5/6, R = 2/3, F1 = 20/27. Turning: P = R = F1 = 7/12.
    assert!((m.lane_change.precision - 5.0 / 6.0).abs() < 1e-12);
    assert!((m.lane_change.recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.lane_change.f1 - 20.0 / 27.0).abs() < 1e-12);
    assert!((m.turn.f1 - 7.0 / 12.0).abs() < 1e-12);
    // TTP over the seven correct manoeuvres: 17.5 / 7.
    assert_eq!(m.ttp_count, 7);
    assert!((m.mean_ttp - 2.5).abs() < 1e-12);

    let confusion = [[0, 0, 0, 1, 0], [1, 2, 0, 0, 0], [0, 1, 2, 0, 0], [0, 0, 0, 2, 1], [1, 0, 0, 0, 1]];
    assert_eq!(m.confusion, confusion);
    for (row, c) in m.confusion[1..].iter().zip(&m.per_class) {
        assert_eq!(row.iter().sum::<usize>(), c.support);
    }
    assert!(m.excluded.is_empty());
}

fn crossing_at(t: usize, len: usize, class: usize) -> Vec<Vec<f64>> {
    (1..=len)
        .map(|k| {
            let mut p = vec![0.2; 5];
            if k >= t {
                p = vec![0.025; 5];
                p[class] = 0.9;
            }
            p
        })
        .collect()
}

#[test]
fn ttp_boundaries() {
    let first = anticipate_probs(&crossing_at(1, 150, 4), 0.9).unwrap();
    assert_eq!(first.predicted, TurnRight);
    assert_eq!(first.t_star, Some(1));
    assert!((first.ttp - 149.0 / 30.0).abs() < 1e-12);
    assert!((first.ttp - 4.97).abs() < 5e-3);

    let last = anticipate_probs(&crossing_at(150, 150, 1), 0.9).unwrap();
    assert_eq!(last.predicted, LaneLeft);
    assert_eq!(last.ttp, 0.0);

    let frame30 = anticipate_probs(&crossing_at(30, 150, 3), 0.9).unwrap();
    assert_eq!(frame30.predicted, TurnLeft);
    assert!((frame30.ttp - 4.0).abs() < 1e-12);

    let never = anticipate_probs(&vec![vec![0.2; 5]; 150], 0.9).unwrap();
    assert_eq!(never.predicted, Straight);
    assert_eq!(never.t_star, None);
    assert_eq!(never.ttp, 0.0);
}

#[test]
fn all_straight_predictions_score_zero() {
    let labels = vec![LaneLeft, LaneRight, TurnLeft, TurnRight, Straight];
    let results: Vec<_> = labels.iter().map(|_| result(Straight, 0.0)).collect();
    let m = compute_metrics(&results, &labels).unwrap();
    assert!(m.per_class.iter().all(|c| c.recall == 0.0));
    assert_eq!(m.f1, 0.0);
    assert_eq!(m.mean_ttp, 0.0);
}
