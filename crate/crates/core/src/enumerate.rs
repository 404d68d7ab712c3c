//! Exhaustive enumeration of Goethals-Seidel Hadamard arrays at small orders.
//!
//! Segments are chosen slot by slot. A partial choice is pruned when the sum
//! of squared segment sums can no longer reach `n`, or when the accumulated
//! power `sum_i |l_ij|^2` exceeds `n` at some frequency. For the last slot
//! every segment with a compatible sum is a candidate and is classified by two
//! independent checks: exact integer periodic autocorrelations (equivalent to
//! `M M^T = n I` through the block structure) and the per-frequency power
//! test. Positive candidates are additionally verified on the full matrix.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gs::{build_matrix, verify_hadamard, GsArray, Spectrum};
use crate::par::Exec;
use crate::symmetry;

/// Largest supported order.
pub const MAX_ORDER: usize = 36;
/// Orders above this skip the full-matrix verification of positives.
pub const FULL_CHECK_MAX_ORDER: usize = 28;

const POWER_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct EnumerateOptions {
    pub keep_arrays: bool,
    /// Order in which the four slots are filled.
    pub slot_order: [usize; 4],
    pub exec: Exec,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { keep_arrays: false, slot_order: [0, 1, 2, 3], exec: Exec::default() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Enumeration {
    pub n: usize,
    /// Hadamard first-row quadruples.
    pub count: u64,
    /// Complete quadruples examined by both checks.
    pub candidates: u64,
    /// Candidates on which the two checks disagreed.
    pub disagreements: u64,
    /// Positives that failed full-matrix verification.
    pub matrix_failures: u64,
    pub arrays: Option<Vec<GsArray>>,
}

struct SegInfo {
    entries: Vec<i8>,
    power: Vec<f64>,
    paf: Vec<i32>,
    sum: i32,
}

fn segment_table(np: usize) -> Vec<SegInfo> {
    (0..1u64 << np)
        .map(|code| {
            let entries: Vec<i8> = (0..np).map(|b| if code >> b & 1 == 1 { 1 } else { -1 }).collect();
            let x: Vec<f64> = entries.iter().map(|&v| v as f64).collect();
            let power = crate::gs::dft(&x).iter().map(|z| z.norm_sqr()).collect();
            let paf = (1..np)
                .map(|s| (0..np).map(|j| entries[j] as i32 * entries[(j + s) % np] as i32).sum())
                .collect();
            let sum = entries.iter().map(|&v| v as i32).sum();
            SegInfo { entries, power, paf, sum }
        })
        .collect()
}

fn is_square(x: i64) -> Option<i64> {
    if x < 0 {
        return None;
    }
    let r = (x as f64).sqrt().round() as i64;
    (r * r == x).then_some(r)
}

pub fn check_order(n: usize) -> Result<()> {
    if n == 0 || !n.is_multiple_of(4) {
        return Err(Error::InvalidOrder(n));
    }
    if n > MAX_ORDER {
        return Err(Error::Unsupported(format!("enumeration is limited to n <= {MAX_ORDER}, got {n}")));
    }
    Ok(())
}

pub fn enumerate_gs(n: usize, opts: &EnumerateOptions) -> Result<Enumeration> {
    check_order(n)?;
    let mut seen = [false; 4];
    opts.slot_order.iter().for_each(|&s| seen[s.min(3)] = true);
    if !seen.iter().all(|&s| s) || opts.slot_order.iter().any(|&s| s > 3) {
        return Err(Error::Config { field: "slot_order", msg: format!("{:?} is not a permutation", opts.slot_order) });
    }
    let np = n / 4;
    let table = segment_table(np);
    let mut by_abs_sum: Vec<Vec<usize>> = vec![Vec::new(); np + 1];
    for (idx, s) in table.iter().enumerate() {
        by_abs_sum[s.sum.unsigned_abs() as usize].push(idx);
    }
    let nf = n as f64;
    let full_check = n <= FULL_CHECK_MAX_ORDER;
    let order = opts.slot_order;

    let partials = opts.exec.map_range(table.len(), |first| {
        let mut out = Enumeration { n, ..Default::default() };
        let mut found = Vec::new();
        let s1 = &table[first];
        let k1 = (s1.sum * s1.sum) as i64;
        if k1 > n as i64 || s1.power.iter().any(|&p| p > nf + POWER_TOL) {
            return (out, found);
        }
        let mut budget2 = vec![0.0; np];
        let mut budget3 = vec![0.0; np];
        for s2 in &table {
            let k2 = k1 + (s2.sum * s2.sum) as i64;
            if k2 > n as i64 {
                continue;
            }
            let mut ok = true;
            for j in 0..np {
                budget2[j] = s1.power[j] + s2.power[j];
                ok &= budget2[j] <= nf + POWER_TOL;
            }
            if !ok {
                continue;
            }
            for s3 in &table {
                let k3 = k2 + (s3.sum * s3.sum) as i64;
                let Some(k4) = is_square(n as i64 - k3) else { continue };
                if k4 as usize > np {
                    continue;
                }
                let mut ok = true;
                for j in 0..np {
                    budget3[j] = budget2[j] + s3.power[j];
                    ok &= budget3[j] <= nf + POWER_TOL;
                }
                if !ok {
                    continue;
                }
                for &last in &by_abs_sum[k4 as usize] {
                    let s4 = &table[last];
                    out.candidates += 1;
                    let exact = (0..np - 1).all(|t| s1.paf[t] + s2.paf[t] + s3.paf[t] + s4.paf[t] == 0);
                    let spectral = (0..np).all(|j| (budget3[j] + s4.power[j] - nf).abs() < POWER_TOL);
                    if exact != spectral {
                        out.disagreements += 1;
                    }
                    if !exact {
                        continue;
                    }
                    out.count += 1;
                    if full_check || opts.keep_arrays {
                        let mut segs: [Vec<i8>; 4] = Default::default();
                        for (slot, s) in order.iter().zip([s1, s2, s3, s4]) {
                            segs[*slot] = s.entries.clone();
                        }
                        let a = GsArray::new(segs).expect("segments of equal length");
                        if full_check && !verify_hadamard(&build_matrix(&a)) {
                            out.matrix_failures += 1;
                        }
                        if opts.keep_arrays {
                            found.push(a);
                        }
                    }
                }
            }
        }
        (out, found)
    });

    let mut total = Enumeration { n, ..Default::default() };
    let mut arrays = Vec::new();
    for (part, found) in partials {
        total.count += part.count;
        total.candidates += part.candidates;
        total.disagreements += part.disagreements;
        total.matrix_failures += part.matrix_failures;
        arrays.extend(found);
    }
    if opts.keep_arrays {
        total.arrays = Some(arrays);
    }
    Ok(total)
}

/// Unpruned reference: builds and verifies the full matrix for all `2^n`
/// arrays. Only for `n <= 20`.
pub fn brute_force_count(n: usize) -> Result<u64> {
    check_order(n)?;
    if n > 20 {
        return Err(Error::Unsupported(format!("brute force is limited to n <= 20, got {n}")));
    }
    Ok((0..1u64 << n)
        .filter(|&code| verify_hadamard(&build_matrix(&GsArray::from_bits(n, code).expect("valid order"))))
        .count() as u64)
}

/// Classifies one array with both checks; used to audit agreement.
pub fn classify(a: &GsArray) -> (bool, bool) {
    let exact = verify_hadamard(&build_matrix(a));
    let sp = Spectrum::of(a);
    let spectral = sp.power.iter().all(|&p| (a.n() as f64 * p - a.n() as f64).abs() < POWER_TOL);
    (exact, spectral)
}

/// `exp(slope)` of the least-squares line through `(n, ln count)`.
pub fn growth_report(counts: &[(usize, u64)]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::Config { field: "counts", msg: "need at least two orders".into() });
    }
    if counts.iter().any(|&(_, c)| c == 0) {
        return Err(Error::Config { field: "counts", msg: "counts must be positive".into() });
    }
    let m = counts.len() as f64;
    let xs: Vec<f64> = counts.iter().map(|&(n, _)| n as f64).collect();
    let ys: Vec<f64> = counts.iter().map(|&(_, c)| (c as f64).ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok((sxy / sxx).exp())
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub count: u64,
    pub orbit_count: u64,
    pub seconds: f64,
}

/// Enumerates `n` with arrays kept and reports raw and orbit counts.
pub fn report_row(n: usize, exec: Exec) -> Result<(ReportRow, Enumeration)> {
    let start = Instant::now();
    let e = enumerate_gs(n, &EnumerateOptions { keep_arrays: true, exec, ..Default::default() })?;
    let orbit_count = symmetry::dedup(e.arrays.as_deref().unwrap_or_default(), exec).len() as u64;
    let row = ReportRow { n, count: e.count, orbit_count, seconds: start.elapsed().as_secs_f64() };
    Ok((row, e))
}

pub fn write_report<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
