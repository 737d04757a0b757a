use figforge_core::compositor::{FigureManifest, Modality, PanelRecord};
use figforge_core::embed::{recall_at_ks, wilcoxon_signed_rank, Matrix};
use figforge_core::io::{self, DetectionSet, EmbeddingMatrix, ScoredBox};
use figforge_core::BBox;
use proptest::prelude::*;

fn arb_bbox() -> impl Strategy<Value = BBox> {
    (0u32..500, 0u32..500, 1u32..200, 1u32..200).prop_map(|(x, y, w, h)| BBox { x, y, w, h })
}

fn arb_manifest() -> impl Strategy<Value = FigureManifest> {
    (
        "[a-z0-9_]{1,12}",
        prop::collection::vec((arb_bbox(), "[A-Za-z0-9-]{0,4}", 0usize..5), 1..6),
        any::<u64>(),
        prop::option::of(".{0,40}"),
    )
        .prop_map(|(id, panels, seed, caption)| FigureManifest {
            file: format!("images/{id}.png"),
            figure_id: id,
            width: 700,
            height: 700,
            seed,
            panels: panels
                .into_iter()
                .map(|(bbox, label_text, m)| PanelRecord {
                    bbox,
                    label_text,
                    source_id: format!("src{m}"),
                    modality: Modality::ALL[m],
                })
                .collect(),
            caption,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn manifest_round_trip(rows in prop::collection::vec(arb_manifest(), 0..8)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        io::write_manifest(&p, &rows).unwrap();
        prop_assert_eq!(io::read_manifest(&p).unwrap(), rows);
    }

    #[test]
    fn detections_round_trip(sets in prop::collection::vec(
        ("[a-z0-9]{1,8}", prop::collection::vec((arb_bbox(), 0.0f64..=1.0), 0..6)), 0..6)
    ) {
        let sets: Vec<DetectionSet> = sets
            .into_iter()
            .map(|(image_id, boxes)| DetectionSet {
                image_id,
                boxes: boxes.into_iter().map(|(b, s)| ScoredBox::new(b, s)).collect(),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        io::write_detections(&p, &sets).unwrap();
        prop_assert_eq!(io::read_detections(&p).unwrap(), sets);
    }

    #[test]
    fn embf_round_trip(n in 0usize..6, d in 1usize..6, seed in any::<u64>()) {
        let data: Vec<f32> = (0..n * d).map(|i| ((seed.wrapping_mul(i as u64 + 1) % 2001) as f32 - 1000.0) / 7.0).collect();
        let ids = (0..n).map(|i| format!("id{i}")).collect();
        let m = EmbeddingMatrix::new(n, d, data, ids).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.embf");
        io::write_embeddings(&p, &m).unwrap();
        prop_assert_eq!(std::fs::metadata(&p).unwrap().len(), 16 + 4 * (n * d) as u64);
        prop_assert_eq!(io::read_embeddings(&p).unwrap(), m);
    }

    #[test]
    fn coco_export_round_trip(rows in prop::collection::vec(arb_manifest(), 0..6)) {
        let mut rows = rows;
        for (i, r) in rows.iter_mut().enumerate() {
            r.figure_id = format!("fig{i}");
        }
        let doc = io::export_coco(&rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        io::write_coco(&p, &doc).unwrap();
        let back = io::read_coco(&p).unwrap();
        let total: usize = rows.iter().map(|r| r.panels.len()).sum();
        prop_assert_eq!(back.annotations.len(), total);
        prop_assert_eq!(back, doc);
    }

    /// Rotating both embedding sets by the same angle in a coordinate plane
    /// leaves every cosine similarity, and hence recall, unchanged.
    #[test]
    fn recall_invariant_under_common_rotation(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 2..10),
        noise in prop::collection::vec(-0.5f64..0.5, 40),
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let n = rows.len();
        let q = Matrix::from_rows(&rows).unwrap();
        let t_rows: Vec<Vec<f64>> = rows.iter().enumerate().map(|(i, r)| r.iter().enumerate().map(|(j, v)| v + noise[i * 4 + j]).collect()).collect();
        let t = Matrix::from_rows(&t_rows).unwrap();
        prop_assume!((0..n).all(|i| q.row(i).iter().any(|v| *v != 0.0) && t.row(i).iter().any(|v| *v != 0.0)));
        let (c, s) = (angle.cos(), angle.sin());
        let rotate = |m: &Matrix| {
            let rows: Vec<Vec<f64>> = (0..m.rows()).map(|i| {
                let r = m.row(i);
                vec![c * r[0] - s * r[1], s * r[0] + c * r[1], r[2], r[3]]
            }).collect();
            Matrix::from_rows(&rows).unwrap()
        };
        let ks: Vec<usize> = (1..=n).collect();
        let before = recall_at_ks(&q, &t, &ks).unwrap();
        let after = recall_at_ks(&rotate(&q), &rotate(&t), &ks).unwrap();
        // rotation can perturb near-ties in the last bits, so compare with
        // a tolerance of one query
        for k in ks {
            prop_assert!((before[&k] - after[&k]).abs() <= 1.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn wilcoxon_ignores_pair_order(
        pairs in prop::collection::vec((-5i32..5, -5i32..5), 1..30),
        shift in 0usize..30,
    ) {
        prop_assume!(pairs.iter().any(|(a, b)| a != b));
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let mut ra = a.clone();
        let mut rb = b.clone();
        let k = shift % a.len();
        ra.rotate_left(k);
        rb.rotate_left(k);
        ra.reverse();
        rb.reverse();
        prop_assert_eq!(wilcoxon_signed_rank(&a, &b).unwrap(), wilcoxon_signed_rank(&ra, &rb).unwrap());
    }
}
