//! Exact finite-alphabet information-bottleneck quantities.
//!
//! Everything is computed by exact enumeration over small alphabets, so
//! the two variational bounds are machine-checkable: the prediction bound
//! `I(M;Y) >= L_p + H(Y)` and the compression bound `I(X;M) <= L_c`, both
//! tight exactly when the variational decoder equals the true posterior
//! `p(y|m)` and the prior equals the true marginal `p(m)`. Natural log
//! throughout.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_X: usize = 16;
pub const MAX_Y: usize = 8;
pub const MAX_M: usize = 16;

const SUM_TOL: f64 = 1e-12;

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &v in p {
        if v < 0.0 {
            return Err(Error::Domain(format!("{what}: negative entry {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::Domain(format!("{what}: sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Joint table p(x, y) over finite alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint {
    p: Vec<Vec<f64>>,
}

impl FiniteJoint {
    pub fn new(p: Vec<Vec<f64>>) -> Result<Self> {
        if p.is_empty() || p[0].is_empty() {
            return Err(Error::Domain("joint table is empty".to_string()));
        }
        if p.len() > MAX_X || p[0].len() > MAX_Y {
            return Err(Error::Domain(format!(
                "joint table {}x{} exceeds {MAX_X}x{MAX_Y}",
                p.len(),
                p[0].len()
            )));
        }
        let y = p[0].len();
        if p.iter().any(|row| row.len() != y) {
            return Err(Error::Domain("joint table rows differ in length".to_string()));
        }
        let flat: Vec<f64> = p.iter().flatten().copied().collect();
        check_distribution(&flat, "joint p(x,y)")?;
        Ok(Self { p })
    }

    pub fn x_len(&self) -> usize {
        self.p.len()
    }

    pub fn y_len(&self) -> usize {
        self.p[0].len()
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.p[x][y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.p.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.y_len()];
        for row in &self.p {
            for (o, v) in out.iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        out
    }
}

/// Row-stochastic encoder p(m | x).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTable {
    rows: Vec<Vec<f64>>,
}

impl EncoderTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Domain("encoder table is empty".to_string()));
        }
        if rows[0].len() > MAX_M {
            return Err(Error::Domain(format!(
                "encoder alphabet {} exceeds {MAX_M}",
                rows[0].len()
            )));
        }
        let m = rows[0].len();
        for (x, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Domain(format!("encoder row {x} has wrong length")));
            }
            check_distribution(row, &format!("encoder row {x}"))?;
        }
        Ok(Self { rows })
    }

    pub fn x_len(&self) -> usize {
        self.rows.len()
    }

    pub fn m_len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn prob(&self, x: usize, m: usize) -> f64 {
        self.rows[x][m]
    }

    /// Identity encoder M = X.
    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|x| (0..n).map(|m| if m == x { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }
}

/// Row-stochastic decoder q(y | m).
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTable {
    rows: Vec<Vec<f64>>,
}

impl DecoderTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Domain("decoder table is empty".to_string()));
        }
        let y = rows[0].len();
        for (m, row) in rows.iter().enumerate() {
            if row.len() != y {
                return Err(Error::Domain(format!("decoder row {m} has wrong length")));
            }
            check_distribution(row, &format!("decoder row {m}"))?;
        }
        Ok(Self { rows })
    }

    pub fn prob(&self, m: usize, y: usize) -> f64 {
        self.rows[m][y]
    }

    pub fn m_len(&self) -> usize {
        self.rows.len()
    }
}

/// Prior r(m).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTable {
    p: Vec<f64>,
}

impl PriorTable {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Domain("prior is empty".to_string()));
        }
        check_distribution(&p, "prior r(m)")?;
        Ok(Self { p })
    }

    pub fn prob(&self, m: usize) -> f64 {
        self.p[m]
    }

    pub fn m_len(&self) -> usize {
        self.p.len()
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
        }
    }
}

/// Exact mutual information of a joint table, in nats. Zero-mass cells
/// are skipped.
pub fn mutual_information(joint: &FiniteJoint) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut total = 0.0;
    for x in 0..joint.x_len() {
        for y in 0..joint.y_len() {
            let p = joint.prob(x, y);
            if p > 0.0 {
                total += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    total
}

/// Natural-log entropy of a distribution.
pub fn dist_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

fn check_encoder_joint(joint: &FiniteJoint, encoder: &EncoderTable) -> Result<()> {
    if encoder.x_len() != joint.x_len() {
        return Err(Error::Domain(format!(
            "encoder has {} rows for |X| = {}",
            encoder.x_len(),
            joint.x_len()
        )));
    }
    Ok(())
}

/// Prediction term `L_p = E_{p(x,y) p(m|x)}[ln q(y|m)]`.
///
/// A zero decoder probability on reachable mass makes the expectation
/// diverge; that is reported as `-inf`, a diagnostic rather than an error.
pub fn l_p(joint: &FiniteJoint, encoder: &EncoderTable, decoder: &DecoderTable) -> Result<f64> {
    check_encoder_joint(joint, encoder)?;
    if decoder.m_len() != encoder.m_len() {
        return Err(Error::Domain(format!(
            "decoder has {} rows for |M| = {}",
            decoder.m_len(),
            encoder.m_len()
        )));
    }
    let mut total = 0.0;
    for x in 0..joint.x_len() {
        for y in 0..joint.y_len() {
            for m in 0..encoder.m_len() {
                let w = joint.prob(x, y) * encoder.prob(x, m);
                if w > 0.0 {
                    let q = decoder.prob(m, y);
                    if q == 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += w * q.ln();
                }
            }
        }
    }
    Ok(total)
}

/// Compression term `L_c = E_{p(x)}[KL(p(m|x) || r(m))]`.
pub fn l_c(px: &[f64], encoder: &EncoderTable, prior: &PriorTable) -> Result<f64> {
    if px.len() != encoder.x_len() {
        return Err(Error::Domain(format!(
            "p(x) has {} entries for {} encoder rows",
            px.len(),
            encoder.x_len()
        )));
    }
    if prior.m_len() != encoder.m_len() {
        return Err(Error::Domain(format!(
            "prior has {} entries for |M| = {}",
            prior.m_len(),
            encoder.m_len()
        )));
    }
    let mut total = 0.0;
    for (x, &weight) in px.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        for m in 0..encoder.m_len() {
            let p = encoder.prob(x, m);
            if p > 0.0 {
                let r = prior.prob(m);
                if r == 0.0 {
                    return Err(Error::Domain(format!(
                        "prior support violation at (x={x}, m={m}): encoder mass on zero prior"
                    )));
                }
                total += weight * p * (p / r).ln();
            }
        }
    }
    Ok(total)
}

/// Joint p(x, m) induced by the Markov chain `p(x,y) p(m|x)`.
pub fn joint_xm(joint: &FiniteJoint, encoder: &EncoderTable) -> Result<FiniteJoint> {
    check_encoder_joint(joint, encoder)?;
    let px = joint.marginal_x();
    let table: Vec<Vec<f64>> = (0..joint.x_len())
        .map(|x| (0..encoder.m_len()).map(|m| px[x] * encoder.prob(x, m)).collect())
        .collect();
    // Reuse the joint validator; |M| <= 16 exceeds MAX_Y, so build directly.
    Ok(FiniteJoint { p: table })
}

/// Joint p(m, y) induced by the Markov chain.
pub fn joint_my(joint: &FiniteJoint, encoder: &EncoderTable) -> Result<FiniteJoint> {
    check_encoder_joint(joint, encoder)?;
    let mut table = vec![vec![0.0; joint.y_len()]; encoder.m_len()];
    for x in 0..joint.x_len() {
        for y in 0..joint.y_len() {
            for (m, row) in table.iter_mut().enumerate() {
                row[y] += joint.prob(x, y) * encoder.prob(x, m);
            }
        }
    }
    Ok(FiniteJoint { p: table })
}

/// The optimal variational decoder: the true posterior p(y | m).
/// Unreachable m rows fall back to uniform.
pub fn optimal_decoder(joint: &FiniteJoint, encoder: &EncoderTable) -> Result<DecoderTable> {
    let my = joint_my(joint, encoder)?;
    let rows: Vec<Vec<f64>> = (0..encoder.m_len())
        .map(|m| {
            let mass: f64 = (0..joint.y_len()).map(|y| my.prob(m, y)).sum();
            if mass > 0.0 {
                (0..joint.y_len()).map(|y| my.prob(m, y) / mass).collect()
            } else {
                vec![1.0 / joint.y_len() as f64; joint.y_len()]
            }
        })
        .collect();
    DecoderTable::new(rows)
}

/// The optimal variational prior: the true marginal p(m).
pub fn marginal_prior(joint: &FiniteJoint, encoder: &EncoderTable) -> Result<PriorTable> {
    check_encoder_joint(joint, encoder)?;
    let px = joint.marginal_x();
    let p: Vec<f64> = (0..encoder.m_len())
        .map(|m| px.iter().enumerate().map(|(x, &w)| w * encoder.prob(x, m)).sum())
        .collect();
    PriorTable::new(p)
}

/// Quality-quantity prior `r(m) proportional to p_ref(m) * exp(-lambda *
/// len(m))` with an explicit per-symbol length map, normalized exactly.
pub fn quality_quantity_prior(
    p_ref: &PriorTable,
    lengths: &[f64],
    lambda: f64,
) -> Result<PriorTable> {
    if lengths.len() != p_ref.m_len() {
        return Err(Error::Domain(format!(
            "{} lengths for {} symbols",
            lengths.len(),
            p_ref.m_len()
        )));
    }
    let unnormalized: Vec<f64> = (0..p_ref.m_len())
        .map(|m| p_ref.prob(m) * (-lambda * lengths[m]).exp())
        .collect();
    let total: f64 = unnormalized.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain(
            "quality-quantity prior has zero total mass".to_string(),
        ));
    }
    PriorTable::new(unnormalized.iter().map(|v| v / total).collect())
}

/// Everything [`verify_bounds`] measures on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub i_xm: f64,
    pub i_my: f64,
    pub l_p: f64,
    pub l_c: f64,
    pub h_y: f64,
    /// `I(M;Y) - (L_p + H(Y))`, non-negative for every valid decoder.
    pub slack_pred: f64,
    /// `L_c - I(X;M)`, non-negative for every valid prior.
    pub slack_comp: f64,
}

impl BoundReport {
    /// key=value lines, one quantity per line.
    pub fn to_kv_lines(&self) -> String {
        format!(
            "i_xm={:.12}\ni_my={:.12}\nl_p={:.12}\nl_c={:.12}\nh_y={:.12}\nslack_pred={:.12}\nslack_comp={:.12}\n",
            self.i_xm, self.i_my, self.l_p, self.l_c, self.h_y, self.slack_pred, self.slack_comp
        )
    }
}

/// Compute both variational bounds and their slacks on one instance.
pub fn verify_bounds(
    joint: &FiniteJoint,
    encoder: &EncoderTable,
    decoder: &DecoderTable,
    prior: &PriorTable,
) -> Result<BoundReport> {
    let i_xm = mutual_information(&joint_xm(joint, encoder)?);
    let i_my = mutual_information(&joint_my(joint, encoder)?);
    let lp = l_p(joint, encoder, decoder)?;
    let lc = l_c(&joint.marginal_x(), encoder, prior)?;
    let h_y = dist_entropy(&joint.marginal_y());
    Ok(BoundReport {
        i_xm,
        i_my,
        l_p: lp,
        l_c: lc,
        h_y,
        slack_pred: i_my - (lp + h_y),
        slack_comp: lc - i_xm,
    })
}

/// One serializable bound-check instance: joint, encoder, decoder, prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub joint: FiniteJoint,
    pub encoder: EncoderTable,
    pub decoder: DecoderTable,
    pub prior: PriorTable,
}

impl Instance {
    /// Text form: header `|X| |Y| |M|`, then the row-major joint, encoder,
    /// decoder tables and the prior line, whitespace-separated.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {}\n",
            self.joint.x_len(),
            self.joint.y_len(),
            self.encoder.m_len()
        );
        let fmt_row = |row: &[f64]| -> String {
            row.iter()
                .map(|v| format!("{v:.17}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for x in 0..self.joint.x_len() {
            let row: Vec<f64> = (0..self.joint.y_len()).map(|y| self.joint.prob(x, y)).collect();
            out.push_str(&fmt_row(&row));
            out.push('\n');
        }
        for x in 0..self.encoder.x_len() {
            let row: Vec<f64> = (0..self.encoder.m_len()).map(|m| self.encoder.prob(x, m)).collect();
            out.push_str(&fmt_row(&row));
            out.push('\n');
        }
        for m in 0..self.decoder.m_len() {
            let row: Vec<f64> = (0..self.joint.y_len()).map(|y| self.decoder.prob(m, y)).collect();
            out.push_str(&fmt_row(&row));
            out.push('\n');
        }
        let prior_row: Vec<f64> = (0..self.prior.m_len()).map(|m| self.prior.prob(m)).collect();
        out.push_str(&fmt_row(&prior_row));
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("instance file is empty".to_string()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("instance header: {e}")))?;
        if dims.len() != 3 {
            return Err(Error::Parse(
                "instance header must be `|X| |Y| |M|`".to_string(),
            ));
        }
        let (nx, ny, nm) = (dims[0], dims[1], dims[2]);
        let mut parse_row = |len: usize, what: &str| -> Result<Vec<f64>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("instance truncated at {what}")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("{what}: {e}")))?;
            if row.len() != len {
                return Err(Error::Parse(format!(
                    "{what}: expected {len} values, got {}",
                    row.len()
                )));
            }
            Ok(row)
        };
        let mut joint_rows = Vec::with_capacity(nx);
        for x in 0..nx {
            joint_rows.push(parse_row(ny, &format!("joint row {x}"))?);
        }
        let mut encoder_rows = Vec::with_capacity(nx);
        for x in 0..nx {
            encoder_rows.push(parse_row(nm, &format!("encoder row {x}"))?);
        }
        let mut decoder_rows = Vec::with_capacity(nm);
        for m in 0..nm {
            decoder_rows.push(parse_row(ny, &format!("decoder row {m}"))?);
        }
        let prior_row = parse_row(nm, "prior")?;
        Ok(Self {
            joint: FiniteJoint::new(joint_rows)?,
            encoder: EncoderTable::new(encoder_rows)?,
            decoder: DecoderTable::new(decoder_rows)?,
            prior: PriorTable::new(prior_row)?,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io_at(path, e))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_text(&text)
    }
}

fn random_distribution(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // Exact renormalization: push rounding residue into the last entry.
    let sum: f64 = out.iter().sum();
    let last = out.len() - 1;
    out[last] += 1.0 - sum;
    out
}

/// Seeded random instance with alphabet sizes in `2..=max_size`. Every
/// table is strictly positive, so all support conditions hold.
pub fn random_instance(seed: u64, max_size: usize) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = rng.gen_range(2..=max_size.min(MAX_X));
    let ny = rng.gen_range(2..=max_size.min(MAX_Y));
    let nm = rng.gen_range(2..=max_size.min(MAX_M));
    let mut joint_rows = Vec::with_capacity(nx);
    let flat = random_distribution(nx * ny, &mut rng);
    for x in 0..nx {
        joint_rows.push(flat[x * ny..(x + 1) * ny].to_vec());
    }
    let encoder_rows: Vec<Vec<f64>> = (0..nx).map(|_| random_distribution(nm, &mut rng)).collect();
    let decoder_rows: Vec<Vec<f64>> = (0..nm).map(|_| random_distribution(ny, &mut rng)).collect();
    let prior = random_distribution(nm, &mut rng);
    Ok(Instance {
        joint: FiniteJoint::new(joint_rows)?,
        encoder: EncoderTable::new(encoder_rows)?,
        decoder: DecoderTable::new(decoder_rows)?,
        prior: PriorTable::new(prior)?,
    })
}

/// The analytic tight case: X = Y a uniform bit, identity encoder, optimal
/// decoder and prior. All quantities are ln 2 or 0 and both slacks vanish.
pub fn builtin_chain_instance() -> Instance {
    let joint = FiniteJoint::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
    let encoder = EncoderTable::identity(2);
    let decoder = optimal_decoder(&joint, &encoder).unwrap();
    let prior = marginal_prior(&joint, &encoder).unwrap();
    Instance {
        joint,
        encoder,
        decoder,
        prior,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mi_independent_bits_is_zero() {
        let joint = FiniteJoint::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        assert_abs_diff_eq!(mutual_information(&joint), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mi_perfectly_correlated_bit_is_ln2() {
        let joint = FiniteJoint::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_abs_diff_eq!(mutual_information(&joint), 2.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn mi_term_by_term() {
        let joint = FiniteJoint::new(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        // 2 * (0.4 ln 1.6 + 0.1 ln 0.4).
        let expected = 2.0 * (0.4 * 1.6f64.ln() + 0.1 * 0.4f64.ln());
        assert_abs_diff_eq!(mutual_information(&joint), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(mutual_information(&joint), 0.19274475702175742, epsilon = 1e-12);
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(FiniteJoint::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(FiniteJoint::new(vec![vec![-0.1, 1.1]]).is_err());
        assert!(EncoderTable::new(vec![vec![0.5, 0.4]]).is_err());
        assert!(PriorTable::new(vec![0.2, 0.2]).is_err());
    }

    #[test]
    fn lp_perfect_decoder_on_deterministic_chain_is_zero() {
        let inst = builtin_chain_instance();
        let lp = l_p(&inst.joint, &inst.encoder, &inst.decoder).unwrap();
        assert_abs_diff_eq!(lp, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn lp_uniform_decoder_is_minus_ln2() {
        let inst = builtin_chain_instance();
        let uniform = DecoderTable::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let lp = l_p(&inst.joint, &inst.encoder, &uniform).unwrap();
        assert_abs_diff_eq!(lp, -(2.0f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn lp_matches_brute_force_on_random_instance() {
        let inst = random_instance(1234, 2).unwrap();
        // Independent brute-force summation over all (x, y, m) cells.
        let mut expected = 0.0;
        for x in 0..inst.joint.x_len() {
            for y in 0..inst.joint.y_len() {
                for m in 0..inst.encoder.m_len() {
                    expected += inst.joint.prob(x, y)
                        * inst.encoder.prob(x, m)
                        * inst.decoder.prob(m, y).ln();
                }
            }
        }
        let got = l_p(&inst.joint, &inst.encoder, &inst.decoder).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn lp_zero_decoder_probability_is_neg_inf() {
        let inst = builtin_chain_instance();
        let broken = DecoderTable::new(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(
            l_p(&inst.joint, &inst.encoder, &broken).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn lc_prior_equal_to_rows_is_zero() {
        let encoder = EncoderTable::new(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        let prior = PriorTable::new(vec![0.3, 0.7]).unwrap();
        let lc = l_c(&[0.5, 0.5], &encoder, &prior).unwrap();
        assert_abs_diff_eq!(lc, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn lc_deterministic_encoder_uniform_prior_is_ln2() {
        let encoder = EncoderTable::identity(2);
        let prior = PriorTable::uniform(2);
        let lc = l_c(&[0.5, 0.5], &encoder, &prior).unwrap();
        assert_abs_diff_eq!(lc, 2.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn lc_matches_brute_force_on_random_instance() {
        let inst = random_instance(99, 3).unwrap();
        let px = inst.joint.marginal_x();
        let mut expected = 0.0;
        for (x, &w) in px.iter().enumerate() {
            for m in 0..inst.encoder.m_len() {
                let p = inst.encoder.prob(x, m);
                if p > 0.0 {
                    expected += w * p * (p / inst.prior.prob(m)).ln();
                }
            }
        }
        let got = l_c(&px, &inst.encoder, &inst.prior).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn lc_support_violation_names_cell() {
        let encoder = EncoderTable::identity(2);
        let prior = PriorTable::new(vec![1.0, 0.0]).unwrap();
        let err = l_c(&[0.5, 0.5], &encoder, &prior).unwrap_err();
        assert!(err.to_string().contains("x=1, m=1"));
    }

    #[test]
    fn tight_case_all_quantities_analytic() {
        let inst = builtin_chain_instance();
        let report = verify_bounds(&inst.joint, &inst.encoder, &inst.decoder, &inst.prior).unwrap();
        let ln2 = 2.0f64.ln();
        assert_abs_diff_eq!(report.i_xm, ln2, epsilon = 1e-12);
        assert_abs_diff_eq!(report.i_my, ln2, epsilon = 1e-12);
        assert_abs_diff_eq!(report.l_c, ln2, epsilon = 1e-12);
        assert_abs_diff_eq!(report.l_p, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.h_y, ln2, epsilon = 1e-12);
        assert!(report.slack_pred.abs() < 1e-9);
        assert!(report.slack_comp.abs() < 1e-9);
    }

    #[test]
    fn perturbed_decoder_opens_prediction_slack_only() {
        let inst = builtin_chain_instance();
        let perturbed = DecoderTable::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        // Keep the optimal (here uniform) prior.
        let report = verify_bounds(&inst.joint, &inst.encoder, &perturbed, &inst.prior).unwrap();
        assert!(report.slack_pred > 1e-3, "slack_pred {}", report.slack_pred);
        assert!(report.slack_comp.abs() < 1e-9);
    }

    #[test]
    fn slacks_nonnegative_on_random_sweep() {
        for seed in 0..200 {
            let inst = random_instance(seed, 8).unwrap();
            let report =
                verify_bounds(&inst.joint, &inst.encoder, &inst.decoder, &inst.prior).unwrap();
            assert!(
                report.slack_pred >= -1e-9,
                "seed {seed}: slack_pred {}",
                report.slack_pred
            );
            assert!(
                report.slack_comp >= -1e-9,
                "seed {seed}: slack_comp {}",
                report.slack_comp
            );
        }
    }

    #[test]
    fn decoder_improvement_is_monotone() {
        // Replacing any decoder with the true posterior can only raise
        // beta * L_p - L_c (L_c does not depend on the decoder).
        for seed in 0..50 {
            let inst = random_instance(seed + 10_000, 6).unwrap();
            let beta = 2.5;
            let lp_any = l_p(&inst.joint, &inst.encoder, &inst.decoder).unwrap();
            let opt = optimal_decoder(&inst.joint, &inst.encoder).unwrap();
            let lp_opt = l_p(&inst.joint, &inst.encoder, &opt).unwrap();
            assert!(
                beta * lp_opt >= beta * lp_any - 1e-12,
                "seed {seed}: {lp_opt} < {lp_any}"
            );
        }
    }

    #[test]
    fn data_processing_inequality() {
        for seed in 0..100 {
            let inst = random_instance(seed + 77, 6).unwrap();
            let i_xy = mutual_information(&inst.joint);
            let i_my = mutual_information(&joint_my(&inst.joint, &inst.encoder).unwrap());
            assert!(i_my <= i_xy + 1e-12, "seed {seed}: I(M;Y) {i_my} > I(X;Y) {i_xy}");
        }
    }

    #[test]
    fn quality_quantity_prior_normalizes_exactly() {
        let p_ref = PriorTable::uniform(4);
        let prior = quality_quantity_prior(&p_ref, &[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        let total: f64 = (0..4).map(|m| prior.prob(m)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
        // Longer symbols get strictly less mass.
        assert!(prior.prob(0) > prior.prob(1));
        assert!(prior.prob(2) > prior.prob(3));
        // Lambda 0 recovers the reference.
        let flat = quality_quantity_prior(&p_ref, &[1.0, 2.0, 3.0, 4.0], 0.0).unwrap();
        for m in 0..4 {
            assert_abs_diff_eq!(flat.prob(m), 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn quality_quantity_prior_valid_in_bounds() {
        // The instantiated prior is a valid r(m) for the compression bound.
        let inst = random_instance(5, 4).unwrap();
        let lengths: Vec<f64> = (0..inst.encoder.m_len()).map(|m| 1.0 + m as f64).collect();
        let prior = quality_quantity_prior(&inst.prior, &lengths, 0.3).unwrap();
        let report = verify_bounds(&inst.joint, &inst.encoder, &inst.decoder, &prior).unwrap();
        assert!(report.slack_comp >= -1e-9);
    }

    #[test]
    fn instance_text_round_trip() {
        let inst = random_instance(31, 5).unwrap();
        let text = inst.to_text();
        let back = Instance::from_text(&text).unwrap();
        let ra = verify_bounds(&inst.joint, &inst.encoder, &inst.decoder, &inst.prior).unwrap();
        let rb = verify_bounds(&back.joint, &back.encoder, &back.decoder, &back.prior).unwrap();
        assert_abs_diff_eq!(ra.slack_pred, rb.slack_pred, epsilon = 1e-12);
        assert_abs_diff_eq!(ra.slack_comp, rb.slack_comp, epsilon = 1e-12);
    }

    #[test]
    fn instance_rejects_invalid_distribution() {
        let text = "2 2 2\n0.5 0.6\n0.0 0.0\n1 0\n0 1\n1 0\n0 1\n0.5 0.5\n";
        assert!(Instance::from_text(text).is_err());
    }
}
