use cbscan::data::{load_dataset, Attribute, Column, Dataset, Record, SchemaSpec};
use proptest::prelude::*;

fn dataset(rows: Vec<(usize, usize, bool, bool, f64)>) -> Dataset {
    let attributes = vec![
        Attribute { name: "colour".into(), values: vec!["red".into(), "green".into(), "blue".into()] },
        Attribute { name: "size".into(), values: vec!["S".into(), "M".into()] },
    ];
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(id, (c, s, a, y, p))| Record {
            id,
            covariates: vec![c, s],
            protected: a,
            outcome: y,
            prediction: Some(p),
            recommendation: Some(p >= 0.5),
        })
        .collect();
    Dataset::new(attributes, records).unwrap()
}

fn row() -> impl Strategy<Value = (usize, usize, bool, bool, f64)> {
    (0..3usize, 0..2usize, any::<bool>(), any::<bool>(), 0.0..=1.0f64)
}

proptest! {
    #[test]
    fn canonical_file_round_trips(rows in prop::collection::vec(row(), 1..60), tab in any::<bool>()) {
        let mut rows = rows;
        rows[0].2 = true;
        let ds = dataset(rows);
        let delim = if tab { b'\t' } else { b',' };
        let mut buf = Vec::new();
        ds.write_delimited(&mut buf, delim).unwrap();
        let (back, _) = load_dataset(buf.as_slice(), &SchemaSpec::canonical(&ds, delim)).unwrap();
        prop_assert_eq!(back.rows.len(), ds.rows.len());
        for (a, b) in ds.rows.iter().zip(&back.rows) {
            prop_assert_eq!(a.protected, b.protected);
            prop_assert_eq!(a.outcome, b.outcome);
            prop_assert_eq!(a.prediction, b.prediction);
            prop_assert_eq!(a.recommendation, b.recommendation);
            for (k, attr) in ds.attributes.iter().enumerate() {
                prop_assert_eq!(&attr.values[a.covariates[k]], &back.attributes[k].values[b.covariates[k]]);
            }
        }
        // vocabularies are first-appearance order, so they can only shrink to the values present
        for (orig, got) in ds.attributes.iter().zip(&back.attributes) {
            prop_assert!(got.values.iter().all(|v| orig.values.contains(v)));
        }
    }

    #[test]
    fn conditional_filter_partitions(rows in prop::collection::vec(row(), 1..60)) {
        let ds = dataset(rows);
        for col in [Column::Outcome, Column::Recommendation] {
            let mut total = 0;
            for z in [false, true] {
                let kept: Vec<&Record> = ds.rows.iter().filter(|r| (Dataset::value(r, col) == 1.0) == z).collect();
                total += kept.len();
                let both = kept.iter().any(|r| r.protected) && kept.iter().any(|r| !r.protected);
                match ds.filter_by_conditional(col, z) {
                    Ok(d) => {
                        prop_assert!(both);
                        prop_assert_eq!(d.rows.iter().map(|r| r.id).collect::<Vec<_>>(), kept.iter().map(|r| r.id).collect::<Vec<_>>());
                    }
                    Err(e) => {
                        prop_assert!(!both);
                        prop_assert!(matches!(e, cbscan::Error::DegenerateFilter(_)));
                    }
                }
            }
            prop_assert_eq!(total, ds.len());
        }
    }
}
