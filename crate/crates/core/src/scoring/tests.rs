use super::*;
use proptest::prelude::*;

fn rec(condition: &str, mode: Mode, item: &str, rater: &str, rating: f64) -> RatingRecord {
    RatingRecord {
        condition: condition.into(),
        mode,
        item: item.into(),
        rater: rater.into(),
        rating: Some(rating),
        response: None,
        correct: None,
        validation_ok: true,
        attention_ok: true,
        hearing_ok: true,
    }
}

fn drt(condition: &str, mode: Mode, item: &str, rater: &str, correct: bool) -> RatingRecord {
    RatingRecord {
        rating: None,
        response: Some("word".into()),
        correct: Some(correct),
        ..rec(condition, mode, item, rater, 0.0)
    }
}

#[test]
fn battery_weights_sum_to_100() {
    for (b, ulb, lb) in [(Battery::track1(), 55.0, 45.0), (Battery::track2(), 35.0, 65.0)] {
        b.validate().unwrap();
        assert_eq!(b.weight_sum(), 100.0);
        let per_mode = |m: Mode| b.conditions.iter().filter_map(|c| c.weight(m)).sum::<f64>();
        assert_eq!((per_mode(Mode::Ulb), per_mode(Mode::Lb)), (ulb, lb));
    }
    let t1 = Battery::track1();
    assert_eq!(t1.condition("1d").unwrap().scored_modes().collect::<Vec<_>>(), [Mode::Ulb]);
}

#[test]
fn battery_toml() {
    let b = Battery::track2();
    assert_eq!(Battery::from_toml(&b.to_toml()).unwrap(), b);
    let text = r#"
track = 9
[[condition]]
id = "x"
test = "ACR"
weight_ulb = 60
[[condition]]
id = "y"
test = "MUSHRA1S"
range = [0, 10]
weight_lb = 40
"#;
    let b = Battery::from_toml(text).unwrap();
    assert_eq!(b.conditions[1].range(), (0.0, 10.0));
    let err = Battery::from_toml(&text.replace("40", "39")).unwrap_err();
    assert_eq!(err.to_string(), "battery: weights sum to 99, expected 100");
    assert!(Battery::from_toml(&text.replace("\"y\"", "\"x\"")).is_err());
    assert!(Battery::from_toml(&text.replace("ACR", "PESQ")).is_err());
}

#[test]
fn normalization_endpoints() {
    let r = |t: TestType| t.default_range();
    assert_eq!(normalize(5.0, r(TestType::Acr)).unwrap(), 100.0);
    assert_eq!(normalize(1.0, r(TestType::Acr)).unwrap(), 0.0);
    assert_eq!(normalize(1.0, r(TestType::Dcr)).unwrap(), 0.0);
    assert_eq!(normalize(0.0, r(TestType::Drt)).unwrap(), 50.0);
    assert_eq!(normalize(-100.0, r(TestType::Drt)).unwrap(), 0.0);
    assert_eq!(normalize(100.0, r(TestType::Drt)).unwrap(), 100.0);
    assert_eq!(normalize(73.2, r(TestType::Mushra1s)).unwrap(), 73.2);
    assert_eq!(normalize(100.0, r(TestType::Mushra1s)).unwrap(), 100.0);
    assert!(matches!(normalize(5.5, r(TestType::Acr)), Err(ScoreError::OutOfRange { .. })));
}

#[test]
fn item_major_averaging() {
    let single: Vec<_> = (0..3).map(|i| rec("2b", Mode::Lb, "a", &format!("r{i}"), 4.0)).collect();
    assert_eq!(aggregate_raw(&single, "2b", Mode::Lb).unwrap(), 4.0);
    // Item a: three ratings of 3; item b: one rating of 5. Plain mean is 3.5.
    let mut v: Vec<_> = (0..3).map(|i| rec("2b", Mode::Lb, "a", &format!("r{i}"), 3.0)).collect();
    v.push(rec("2b", Mode::Lb, "b", "r9", 5.0));
    assert_eq!(aggregate_raw(&v, "2b", Mode::Lb).unwrap(), 4.0);
    let one_each: Vec<_> = [1.0, 2.0, 4.0].iter().enumerate()
        .map(|(i, &x)| rec("2b", Mode::Lb, &format!("i{i}"), "r", x)).collect();
    assert_eq!(aggregate_raw(&one_each, "2b", Mode::Lb).unwrap(), 7.0 / 3.0);
    assert_eq!(
        aggregate_raw(&v, "2b", Mode::Ulb),
        Err(ScoreError::NoRecords { condition: "2b".into(), mode: Mode::Ulb })
    );
}

#[test]
fn drt_scores() {
    let all: Vec<_> = (0..5).map(|i| drt("2d", Mode::Ulb, &format!("p{i}"), "r", true)).collect();
    assert_eq!(drt_raw(&all, "2d", Mode::Ulb).unwrap(), 100.0);
    let chance: Vec<_> = (0..6).map(|i| drt("2d", Mode::Ulb, &format!("p{}", i / 2), "r", i % 2 == 0)).collect();
    assert_eq!(drt_raw(&chance, "2d", Mode::Ulb).unwrap(), 0.0);
    // 300 right and 84 wrong spread evenly: 4 pairs × (75 right, 21 wrong).
    let mut pooled = Vec::new();
    for p in 0..4 {
        for k in 0..96 {
            pooled.push(drt("2d", Mode::Ulb, &format!("p{p}"), &format!("r{k}"), k < 75));
        }
    }
    let expect = 100.0 * (300.0 - 84.0) / 384.0;
    assert_eq!(expect, 56.25);
    assert!((drt_raw(&pooled, "2d", Mode::Ulb).unwrap() - expect).abs() < 1e-12);
    let no_flag = vec![rec("2d", Mode::Ulb, "p", "r", 1.0)];
    assert!(matches!(drt_raw(&no_flag, "2d", Mode::Ulb), Err(ScoreError::MissingField { what: "correct", .. })));
}

#[test]
fn filter_fixture() {
    // Ten records from four raters: r2 fails attention once, r3 fails the
    // hearing screen and validation. Survivors are r1's and r4's records.
    let mut v = Vec::new();
    for (i, rater) in ["r1", "r2", "r3", "r4", "r1", "r2", "r3", "r4", "r1", "r2"].iter().enumerate() {
        v.push(rec("1a", Mode::Ulb, &format!("i{}", i % 3), rater, 50.0));
    }
    v[5].attention_ok = false;
    v[2].hearing_ok = false;
    v[6].validation_ok = false;
    let (kept, report) = filter_raters(&v);
    assert_eq!(kept.len(), 5);
    assert!(kept.iter().all(|r| r.rater == "r1" || r.rater == "r4"));
    assert_eq!(
        report,
        FilterReport {
            failed_validation: 1,
            failed_attention: 1,
            failed_hearing: 1,
            raters_dropped: 2,
            records_dropped: 5,
        }
    );
    let clean: Vec<_> = (0..4).map(|i| rec("1a", Mode::Ulb, "i", &format!("r{i}"), 1.0)).collect();
    assert_eq!(filter_raters(&clean).0, clean);
}

fn fixture_normalized() -> BTreeMap<(String, Mode), f64> {
    let b = Battery::track2();
    let raw = [
        ("2a", Mode::Ulb, 60.0),
        ("2a", Mode::Lb, 75.0),
        ("2b", Mode::Ulb, 2.8),
        ("2b", Mode::Lb, 3.4),
        ("2c", Mode::Ulb, 2.6),
        ("2c", Mode::Lb, 3.2),
        ("2d", Mode::Ulb, 80.0),
        ("2e", Mode::Lb, 60.0),
    ];
    raw.iter()
        .map(|&(c, m, r)| {
            let range = b.condition(c).unwrap().range();
            ((c.to_string(), m), normalize(r, range).unwrap())
        })
        .collect()
}

#[test]
fn track2_fixture() {
    let n = fixture_normalized();
    assert!((n[&("2b".into(), Mode::Ulb)] - 45.0).abs() < 1e-12);
    assert_eq!(n[&("2d".into(), Mode::Ulb)], 90.0);
    assert_eq!(n[&("2e".into(), Mode::Lb)], 80.0);
    let score = final_score(&n, &Battery::track2()).unwrap();
    let oracle = 0.10 * 60.0 + 0.15 * 75.0 + 0.10 * 45.0 + 0.20 * 60.0 + 0.10 * 40.0 + 0.20 * 55.0 + 0.05 * 90.0 + 0.10 * 80.0;
    assert!((score - 61.25).abs() < 1e-9, "{score}");
    assert!((score - oracle).abs() < 1e-9);
}

#[test]
fn zeroing_one_condition_is_linear() {
    let b = Battery::track2();
    let n = fixture_normalized();
    let base = final_score(&n, &b).unwrap();
    for (key, v) in &n {
        let mut z = n.clone();
        z.insert(key.clone(), 0.0);
        let w = b.condition(&key.0).unwrap().weight(key.1).unwrap();
        assert!((base - final_score(&z, &b).unwrap() - w * v / 100.0).abs() < 1e-9);
    }
}

#[test]
fn missing_conditions_are_listed() {
    let mut n = fixture_normalized();
    n.remove(&("2c".into(), Mode::Lb));
    n.remove(&("2e".into(), Mode::Lb));
    assert_eq!(
        final_score(&n, &Battery::track2()),
        Err(ScoreError::Missing(vec!["2c/lb".into(), "2e/lb".into()]))
    );
    let all: BTreeMap<_, _> = n.keys().map(|k| (k.clone(), 100.0)).chain([
        (("2c".into(), Mode::Lb), 100.0),
        (("2e".into(), Mode::Lb), 100.0),
    ]).collect();
    assert_eq!(final_score(&all, &Battery::track2()).unwrap(), 100.0);
}

/// Records whose per-(condition, mode) raw scores equal the fixture.
fn fixture_records() -> Vec<RatingRecord> {
    let mut v = Vec::new();
    for (c, m, vals) in [
        ("2a", Mode::Ulb, [50.0, 70.0]),
        ("2a", Mode::Lb, [75.0, 75.0]),
        ("2b", Mode::Ulb, [2.6, 3.0]),
        ("2b", Mode::Lb, [3.4, 3.4]),
        ("2c", Mode::Ulb, [2.0, 3.2]),
        ("2c", Mode::Lb, [3.0, 3.4]),
    ] {
        for (i, x) in vals.iter().enumerate() {
            v.push(rec(c, m, &format!("{c}-{i}"), &format!("r{i}"), *x));
        }
    }
    // DRT 80 = 9 right, 1 wrong per pair; DRT 60 = 8 right, 2 wrong.
    for (c, m, right) in [("2d", Mode::Ulb, 9), ("2e", Mode::Lb, 8)] {
        for p in 0..3 {
            for k in 0..10 {
                v.push(drt(c, m, &format!("{c}-p{p}"), &format!("r{k}"), k < right));
            }
        }
    }
    v
}

#[test]
fn evaluate_end_to_end() {
    let mut records = fixture_records();
    // A screened-out rater with wild ratings must not move the result.
    let mut bad = rec("2a", Mode::Ulb, "2a-0", "cheater", 0.0);
    bad.attention_ok = false;
    records.push(bad);
    let report = evaluate(&records, &Battery::track2()).unwrap();
    assert!((report.final_score - 61.25).abs() < 1e-9, "{}", render_table(&report));
    assert_eq!(report.filter.raters_dropped, 1);
    assert_eq!(report.rows.len(), 8);
    let json = to_json(&report);
    assert_eq!(json["conditions"][0]["mode"], "ulb");
    assert!(render_table(&report).contains("final score (track 2): 61.2500"));
}

#[test]
fn evaluate_errors() {
    let b = Battery::track2();
    let mut records = fixture_records();
    records.retain(|r| r.condition != "2c");
    assert_eq!(
        evaluate(&records, &b).unwrap_err().to_string(),
        "missing normalized scores for 2c/ulb, 2c/lb"
    );

    let mut records = fixture_records();
    for r in records.iter_mut().filter(|r| r.item == "2b-1") {
        r.hearing_ok = false;
    }
    // r1 is dropped everywhere, which empties every item only r1 rated.
    assert!(matches!(evaluate(&records, &b), Err(ScoreError::EmptyItem { .. })));

    let mut records = fixture_records();
    records[0].rating = Some(101.0);
    assert!(matches!(evaluate(&records, &b), Err(ScoreError::RatingRange { rating, .. }) if rating == 101.0));

    let mut records = fixture_records();
    records[0].condition = "9z".into();
    assert_eq!(evaluate(&records, &b), Err(ScoreError::UnknownCondition("9z".into())));
}

#[test]
fn csv_round_trip_and_errors() {
    let records = fixture_records();
    let text = write_ratings(&records);
    assert_eq!(read_ratings(text.as_bytes()).unwrap(), records);
    let text = "condition,mode,item,rater,rating,response,correct,validation_ok,attention_ok,hearing_ok\n\
                1a, ulb, i1, r1, 40, , , yes, pass, TRUE\n\
                1a,lb,i1,r1,abc,,,1,1,1\n";
    let err = read_ratings(text.as_bytes()).unwrap_err();
    assert!(matches!(&err, ScoreError::Csv { line: 3, message } if message.contains("invalid rating")), "{err}");
    let ok = read_ratings(text.lines().take(2).collect::<Vec<_>>().join("\n").as_bytes()).unwrap();
    assert_eq!(ok[0].rating, Some(40.0));
    assert!(ok[0].validation_ok && ok[0].attention_ok && ok[0].hearing_ok);
    assert!(read_ratings("condition,mode\n1a,xlb\n".as_bytes()).is_err());
}

proptest! {
    #[test]
    fn normalize_is_monotone(a in -100.0f64..100.0, b in -100.0f64..100.0) {
        let r = TestType::Drt.default_range();
        let (na, nb) = (normalize(a, r).unwrap(), normalize(b, r).unwrap());
        prop_assert!((0.0..=100.0).contains(&na));
        if a < b { prop_assert!(na < nb); }
        // Inverse map recovers the raw value.
        prop_assert!((na / 100.0 * 200.0 - 100.0 - a).abs() < 1e-9);
    }

    #[test]
    fn final_score_is_monotone(values in proptest::collection::vec(0.0f64..100.0, 8),
                               bump in 0usize..8, delta in 0.0f64..50.0) {
        let b = Battery::track2();
        let keys: Vec<_> = fixture_normalized().into_keys().collect();
        let n: BTreeMap<_, _> = keys.iter().cloned().zip(values.iter().copied()).collect();
        let mut m = n.clone();
        *m.get_mut(&keys[bump]).unwrap() += delta;
        let (s0, s1) = (final_score(&n, &b).unwrap(), final_score(&m, &b).unwrap());
        prop_assert!(s1 >= s0);
        prop_assert!((0.0..=100.0 + 1e-9).contains(&s0));
    }
}
