use proptest::prelude::*;
use xover::io::{design_to_csv, design_to_json, parse_design};
use xover_core::CrossoverDesign;

fn design() -> impl Strategy<Value = CrossoverDesign> {
    (2usize..6, 2usize..6, 1usize..10).prop_flat_map(|(t, p, n)| {
        prop::collection::vec(prop::collection::vec(1u16..=t as u16, p), n)
            .prop_map(move |subjects| CrossoverDesign::from_subjects(t, &subjects).unwrap())
    })
}

fn labels(t: usize) -> Vec<String> {
    (0..t).map(|k| format!("trt-{}", (b'a' + k as u8) as char)).collect()
}

proptest! {
    #[test]
    fn json_round_trip(d in design()) {
        let back = parse_design(&design_to_json(&d, None), None).unwrap();
        prop_assert_eq!(&back.design, &d);
        let l = labels(d.t());
        let back = parse_design(&design_to_json(&d, Some(&l)), None).unwrap();
        prop_assert_eq!(&back.design, &d);
        prop_assert_eq!(back.labels, l);
    }

    #[test]
    fn csv_round_trip(d in design()) {
        let back = parse_design(&design_to_csv(&d, None), Some(d.t())).unwrap();
        prop_assert_eq!(back.design, d);
    }
}
