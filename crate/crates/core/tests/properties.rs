use proptest::prelude::*;

use echo_sonar::dataset::{augment, read_tensor, write_tensor, FeatureWindow, Tensor, WINDOW_PROFILES};
use echo_sonar::geometry::Vec3;
use echo_sonar::pose::{flexion_angles, normalize_pose};
use echo_sonar::rangeprofile::{successive_subtract, RangeProfile};
use echo_sonar::sim::{hand_pose_from_params, HandKinematicParams, HandModel};
use echo_sonar::skeleton::HandPose;

fn params() -> impl Strategy<Value = HandKinematicParams> {
    (
        (-0.05..0.05f64, 0.12..0.25f64, -0.14..-0.08f64),
        -30.0..30.0f64,
        -30.0..30.0f64,
        -20.0..20.0f64,
        prop::array::uniform5(0.0..1.0f64),
    )
        .prop_map(|((x, y, z), roll, az, el, flexion)| HandKinematicParams {
            wrist_pos: Vec3::new(x, y, z),
            palm_rotation_deg: roll,
            azimuth_deg: az,
            elevation_deg: el,
            flexion,
        })
}

fn pose() -> impl Strategy<Value = HandPose> {
    params().prop_map(|p| hand_pose_from_params(&p, &HandModel::default()).unwrap())
}

fn profile(index: usize, values: Vec<f64>) -> RangeProfile {
    RangeProfile {
        channels: 1,
        cells: values.len(),
        magnitudes: values,
        window_index: index,
        cell_size_m: 0.00357,
        origin_samples: vec![index * 512],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flexion_angles_stay_in_range(p in pose()) {
        for a in flexion_angles(&p).unwrap().degrees {
            prop_assert!((0.0..=180.0).contains(&a), "{a}");
        }
    }

    #[test]
    fn normalisation_removes_translation_and_scale(
        p in pose(),
        (dx, dy, dz) in (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64),
        scale in 0.5..2.0f64,
    ) {
        let moved = p.map(|j| (j + Vec3::new(dx, dy, dz)) * scale);
        let a = normalize_pose(&p).unwrap();
        let b = normalize_pose(&moved).unwrap();
        for (u, v) in a.joints.iter().zip(&b.joints) {
            prop_assert!(u.distance(*v) < 1e-9);
        }
    }

    #[test]
    fn subtraction_is_rectified(
        prev in prop::collection::vec(0.0..10.0f64, 32),
        curr in prop::collection::vec(0.0..10.0f64, 32),
    ) {
        let out = successive_subtract(&profile(4, curr.clone()), &profile(3, prev.clone())).unwrap();
        for ((o, c), p) in out.magnitudes.iter().zip(&curr).zip(&prev) {
            prop_assert!(*o >= 0.0);
            prop_assert_eq!(*o, (c - p).max(0.0));
        }
        let same = successive_subtract(&profile(4, prev.clone()), &profile(3, prev)).unwrap();
        prop_assert!(same.magnitudes.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tensor_files_round_trip(
        dims in prop::collection::vec(1usize..6, 1..4),
        seed in any::<u64>(),
    ) {
        let n: usize = dims.iter().product();
        let data: Vec<f32> = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f32) * 0.125 - 7.0).collect();
        let t = Tensor::new(dims, data).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        prop_assert_eq!(read_tensor(&mut &buf[..]).unwrap(), t);
    }

    #[test]
    fn augmentation_keeps_the_overlap(shift in prop::sample::select(vec![-3, -2, -1, 1, 2, 3]), p in pose()) {
        let cells = 16;
        let tensor: Vec<f32> = (0..2 * cells * WINDOW_PROFILES).map(|i| (i % 97) as f32).collect();
        let w = FeatureWindow { channels: 2, cells, tensor, end_timestamp_us: 5, label: Some(p) };
        let out = augment(&w, &[shift], 3.57).unwrap().remove(0);
        prop_assert_eq!(out.end_timestamp_us, 5);
        for c in 0..2 {
            for k in 0..cells {
                let src = k as i32 - shift;
                for s in 0..WINDOW_PROFILES {
                    let want = if (0..cells as i32).contains(&src) { w.at(c, src as usize, s) } else { 0.0 };
                    prop_assert_eq!(out.at(c, k, s), want);
                }
            }
        }
    }
}
