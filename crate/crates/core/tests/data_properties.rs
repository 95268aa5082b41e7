use maneuver_core::data::{
    label_lateral, synth_generate, DataError, FrameIndex, LabelDistribution, LaneConfig,
    SynthConfig, TrajectoryPoint, VehicleTrack, LABEL_FUTURE, LABEL_PAST, SPEED_WINDOW,
};
use maneuver_core::Lateral;
use proptest::prelude::*;

fn synth(n: usize, frames: u32, lc: f64, br: f64, seed: u64) -> FrameIndex {
    synth_generate(&SynthConfig {
        n_vehicles: n,
        n_frames: frames,
        lane_change_rate: lc,
        brake_rate: br,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn labelable(track: &VehicleTrack) -> usize {
    track.len().saturating_sub((LABEL_PAST + SPEED_WINDOW) as usize)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trip(n in 1usize..12, frames in 150u32..220, seed in any::<u64>()) {
        let idx = synth(n, frames, 0.2, 0.2, seed);
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        let back = FrameIndex::ingest_reader(buf.as_slice(), *idx.meta()).unwrap();
        prop_assert_eq!(back, idx);
    }

    #[test]
    fn neighbor_relation_is_symmetric(n in 2usize..16, seed in any::<u64>(), f in 1u32..150) {
        let idx = synth(n, 150, 0.2, 0.0, seed);
        for a in idx.vehicle_ids() {
            for b in idx.neighbors(a, f).unwrap() {
                let back = idx.neighbors(b.vehicle_id, f).unwrap();
                prop_assert!(back.iter().any(|p| p.vehicle_id == a));
            }
        }
    }

    #[test]
    fn label_totals_match_labelable_frames(n in 1usize..20, seed in any::<u64>()) {
        let idx = synth(n, 200, 0.2, 0.2, seed);
        let dist = LabelDistribution::from_index(&idx).unwrap();
        let expected: usize = idx.tracks().map(labelable).sum();
        prop_assert_eq!(dist.lateral.iter().sum::<usize>(), expected);
        prop_assert_eq!(dist.longitudinal.iter().sum::<usize>(), expected);
        prop_assert_eq!(dist.total, expected);
    }

    #[test]
    fn lateral_label_ignores_longitudinal_shift(seed in any::<u64>(), shift in -500.0..500.0f64) {
        let idx = synth(10, 200, 0.5, 0.0, seed);
        for track in idx.tracks() {
            let moved = VehicleTrack {
                vehicle_id: track.vehicle_id,
                points: track
                    .points
                    .iter()
                    .map(|p| TrajectoryPoint { local_y: p.local_y + shift, ..*p })
                    .collect(),
            };
            for t in track.first_frame() + LABEL_PAST..=track.last_frame() - LABEL_FUTURE {
                prop_assert_eq!(label_lateral(track, t).ok(), label_lateral(&moved, t).ok());
            }
        }
    }
}

#[test]
fn synthetic_lane_changes_are_labelled() {
    let idx = synth(40, 200, 0.25, 0.0, 3);
    let changers = idx
        .tracks()
        .filter(|t| {
            (t.first_frame() + LABEL_PAST..=t.last_frame() - SPEED_WINDOW)
                .any(|f| label_lateral(t, f).is_ok_and(|l| l != Lateral::SameLane))
        })
        .count();
    assert_eq!(changers, 10);
}

#[test]
fn label_report_csv() {
    let idx = synth(20, 200, 0.1, 0.1, 1);
    let dist = idx.label_distribution().unwrap();
    let mut out = Vec::new();
    dist.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("class,count,percent"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5 + 4 + 1 + 1);
    for r in &rows {
        let pct: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=100.0).contains(&pct), "{r}");
    }
}

#[test]
fn ingest_rejects_gaps_with_vehicle_id() {
    let csv = "Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID,v_Vel\n\
               7,1,6,0,1,20\n7,2,6,2,1,20\n7,4,6,6,1,20\n";
    match FrameIndex::ingest_reader(csv.as_bytes(), LaneConfig::default()) {
        Err(DataError::Track { vehicle_id, .. }) => assert_eq!(vehicle_id, 7),
        other => panic!("expected track error, got {other:?}"),
    }
}
