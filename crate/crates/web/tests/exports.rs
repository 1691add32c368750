use cardiofuse_web::{ecg_chain_json, emd_json, fundus_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn ecg_chain_shapes() {
    let v = parse(ecg_chain_json(3, "none").unwrap());
    let n = v["raw"].as_array().unwrap().len();
    assert_eq!(n, v["filtered"].as_array().unwrap().len());
    assert_eq!(v["spectrum"].as_array().unwrap().len(), 128);
    let total: f64 = v["spectrum"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let detected = v["peaks_s"].as_array().unwrap().len();
    let truth = v["true_peaks_s"].as_array().unwrap().len();
    assert_eq!(detected, truth);
    assert!(ecg_chain_json(3, "bogus").is_err());
    for a in ["wide-qrs", "st-elevation", "irregular-rr"] {
        assert!(ecg_chain_json(3, a).is_ok());
    }
}

#[test]
fn emd_of_shifted_spike() {
    let mut p = vec![0.0; 8];
    let mut q = vec![0.0; 8];
    p[1] = 1.0;
    q[4] = 2.0;
    let v = parse(emd_json(&p, &q).unwrap());
    assert!((v["emd"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(v["cdf_q"][7].as_f64().unwrap(), 1.0);
    assert!(emd_json(&p, &q[..4]).is_err());
    assert!(emd_json(&[0.0; 3], &[1.0; 3]).is_err());
}

#[test]
fn fundus_shapes() {
    let v = parse(fundus_json(2, true).unwrap());
    let (w, h) = (v["width"].as_u64().unwrap(), v["height"].as_u64().unwrap());
    assert_eq!(v["pixels"].as_array().unwrap().len() as u64, w * h);
    assert_eq!(v["spectrum_pixels"].as_array().unwrap().len() as u64, w * h);
    assert_eq!(v["radial"].as_array().unwrap().len(), 64);
    assert!(v["tortuosity"].as_f64().unwrap() >= 2.0);
}
