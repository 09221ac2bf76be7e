use spark_wasm::{correlations_json, cross_attention_json, prompt_text};

#[test]
fn prompt_matches_kind() {
    let fb = prompt_text("feedback", "Ban cars?", "Streets get safer.", [0.0; 3]).unwrap();
    assert!(fb.contains("Streets get safer."));
    let sq = prompt_text("similar_quality", "Ban cars?", "Streets get safer.", [3.0, 4.0, 2.5]).unwrap();
    assert_ne!(fb, sq);
    assert!(prompt_text("poem", "t", "a", [0.0; 3]).is_err());
    assert!(prompt_text("similar_quality", "t", "a", [9.0, 1.0, 1.0]).is_err());
}

#[test]
fn correlations_of_known_lists() {
    let v: serde_json::Value = serde_json::from_str(&correlations_json("1, 2, 3, 4", "2 4 6 9").unwrap()).unwrap();
    assert_eq!(v["n"], 4);
    assert_eq!(v["spearman"], 1.0);
    assert!(v["pearson"].as_f64().unwrap() > 0.98);
    let flat: serde_json::Value = serde_json::from_str(&correlations_json("1 1 1", "1 2 3").unwrap()).unwrap();
    assert!(flat["pearson"].is_null());
    assert!(correlations_json("1 2", "1 2 3").is_err());
    assert!(correlations_json("1 x", "1 2").is_err());
}

#[test]
fn cross_attention_rows_are_distributions() {
    let json = cross_attention_json("Ban cars?", "Streets get safer.", "The claim lacks evidence.", 3).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let nq = v["queries"].as_array().unwrap().len();
    let nk = v["keys"].as_array().unwrap().len();
    let heads = v["weights"].as_array().unwrap();
    assert_eq!(heads.len(), 2);
    for head in heads {
        let rows = head.as_array().unwrap();
        assert_eq!(rows.len(), nq);
        for row in rows {
            let row = row.as_array().unwrap();
            assert_eq!(row.len(), nk);
            let sum: f64 = row.iter().map(|p| p.as_f64().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
    assert_eq!(json, cross_attention_json("Ban cars?", "Streets get safer.", "The claim lacks evidence.", 3).unwrap());
    assert!(cross_attention_json("t", "a", "  ", 0).is_err());
}
