//! Small browser explorers over the `corgii` primitives. Each export takes
//! plain numbers and returns a JSON string, so the page needs no bundler.
//! The same functions back the native tests.

use corgii::diff::Tensor;
use corgii::probe::hamming_ball;
use corgii::reranker::sinkhorn;
use corgii::tokenizer::{chamfer, injective_distance, SoftCodes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_SIDE: usize = 12;
const MAX_ITERS: usize = 500;

#[derive(Debug, Serialize)]
pub struct SinkhornTrace {
    pub n: usize,
    /// Row-major plan after the last iteration.
    pub plan: Vec<f64>,
    /// `max |column sum - 1|` after each iteration; rows are exact.
    pub column_error: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct BallReport {
    pub token: u32,
    pub bits: usize,
    /// Tokens at each exact distance `0..=radius`.
    pub shells: Vec<Vec<u32>>,
    pub total: usize,
}

#[derive(Debug, Serialize)]
pub struct CodeReport {
    pub query: Vec<Vec<f64>>,
    pub corpus: Vec<Vec<f64>>,
    pub chamfer: f64,
    pub injective: f64,
}

fn seeded_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(rows, cols, data).expect("length matches shape")
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Sinkhorn on an `n x n` matrix of uniform logits in `[-scale, scale]`.
pub fn sinkhorn_trace(seed: u64, n: usize, scale: f64, temp: f64, iters: usize) -> Result<SinkhornTrace, String> {
    if !(1..=MAX_SIDE).contains(&n) || !(1..=MAX_ITERS).contains(&iters) || !(scale > 0.0) {
        return Err(format!("need 1 <= n <= {MAX_SIDE}, 1 <= T <= {MAX_ITERS} and scale > 0"));
    }
    let logits = seeded_matrix(&mut ChaCha8Rng::seed_from_u64(seed), n, n, -scale, scale);
    let mut column_error = Vec::with_capacity(iters);
    let mut plan = None;
    for t in 1..=iters {
        let p = sinkhorn(&logits, temp, t).map_err(|e| e.to_string())?;
        let worst = (0..n)
            .map(|j| ((0..n).map(|i| p.get(i, j)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        column_error.push(worst);
        plan = Some(p);
    }
    Ok(SinkhornTrace {
        n,
        plan: plan.expect("iters >= 1").into_data(),
        column_error,
    })
}

/// Hamming ball around `token`, split into shells by distance.
pub fn ball(token: u32, radius: usize, bits: usize) -> Result<BallReport, String> {
    if !(1..=16).contains(&bits) {
        return Err("bits must be in 1..=16".into());
    }
    let members = hamming_ball(token, radius, bits).map_err(|e| e.to_string())?;
    let mut shells = vec![Vec::new(); radius + 1];
    for &t in &members {
        shells[(t ^ token).count_ones() as usize].push(t);
    }
    Ok(BallReport {
        token,
        bits,
        total: members.len(),
        shells,
    })
}

/// Chamfer and Sinkhorn-matched distances between random soft codes.
pub fn codes(seed: u64, nq: usize, nc: usize, bits: usize, temp: f64, iters: usize) -> Result<CodeReport, String> {
    if nq == 0 || nc == 0 || nq.max(nc) > MAX_SIDE || !(1..=16).contains(&bits) {
        return Err(format!("need 1 <= nq, nc <= {MAX_SIDE} and 1 <= bits <= 16"));
    }
    if !(1..=MAX_ITERS).contains(&iters) {
        return Err(format!("need 1 <= T <= {MAX_ITERS}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zq = seeded_matrix(&mut rng, nq, bits, 0.0, 1.0);
    let zc = seeded_matrix(&mut rng, nc, bits, 0.0, 1.0);
    let sq = SoftCodes::new(zq.clone(), nq).map_err(|e| e.to_string())?;
    let sc = SoftCodes::new(zc.clone(), nc).map_err(|e| e.to_string())?;
    Ok(CodeReport {
        chamfer: chamfer(&sq, &sc).map_err(|e| e.to_string())?,
        injective: injective_distance(&sq, &sc, temp, iters).map_err(|e| e.to_string())?,
        query: rows(&zq),
        corpus: rows(&zc),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = sinkhornTrace)]
pub fn sinkhorn_trace_js(seed: u32, n: usize, scale: f64, temp: f64, iters: usize) -> Result<String, JsValue> {
    to_js(sinkhorn_trace(seed.into(), n, scale, temp, iters))
}

#[wasm_bindgen(js_name = hammingBall)]
pub fn ball_js(token: u32, radius: usize, bits: usize) -> Result<String, JsValue> {
    to_js(ball(token, radius, bits))
}

#[wasm_bindgen(js_name = codeDistances)]
pub fn codes_js(seed: u32, nq: usize, nc: usize, bits: usize, temp: f64, iters: usize) -> Result<String, JsValue> {
    to_js(codes(seed.into(), nq, nc, bits, temp, iters))
}
