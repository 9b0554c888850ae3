//! Collocation machinery: interpolation-node generation and barycentric
//! Lagrange surrogates.
//!
//! A valuation function `V(t, ·)` of the short rate is replaced, one
//! monitoring date at a time, by the polynomial interpolating its exact
//! values at the Gauss quadrature nodes of the short rate's marginal
//! distribution. Gauss nodes of the risk factor's law are the L²-optimal
//! interpolation points for smooth integrands, so a handful of exact
//! valuations per date buys a surrogate accurate enough to stand in for
//! millions of Monte Carlo revaluations.
//!
//! The module provides:
//! - [`golub_welsch`]: Gauss nodes/weights of an arbitrary distribution
//!   given its raw moments (three-term recurrence via the Chebyshev
//!   algorithm in double-double arithmetic, then a symmetric tridiagonal
//!   eigensolve);
//! - [`hermite_nodes`]: the Gaussian special case, built directly from the
//!   probabilists' Hermite recurrence;
//! - [`truncated_normal_moments`] / [`truncated_normal_nodes`]: one-sided
//!   truncated normal laws, for option components valued on the
//!   not-yet-exercised region;
//! - [`chebyshev_nodes`]: distribution-free alternative nodes;
//! - [`nested_subset`]: the centered d-of-N node subset used by the
//!   low-order difference surrogates;
//! - [`fit`] / [`fit_difference`] / [`Surrogate`]: barycentric Lagrange
//!   interpolants and the two-level "base plus low-order correction" form.

mod dd;
mod eigen;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use dd::{std_normal_cdf_dd, std_normal_pdf_dd, Dd};

// ---------------------------------------------------------------------------
// Node sets
// ---------------------------------------------------------------------------

/// An ordered set of interpolation nodes, optionally carrying the Gauss
/// quadrature weights of the generating distribution.
///
/// Invariants enforced at construction: nodes are finite and strictly
/// increasing; weights, when present, are positive and sum to 1 within
/// 1e-12.
#[derive(Clone, Debug)]
pub struct NodeSet {
    nodes: Vec<f64>,
    weights: Option<Vec<f64>>,
    descriptor: String,
}

impl NodeSet {
    /// Validating constructor; see the type-level invariants.
    pub fn new(nodes: Vec<f64>, weights: Option<Vec<f64>>, descriptor: String) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Validation("node set must be non-empty".into()));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "node set '{descriptor}' contains non-finite nodes"
            )));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "node set '{descriptor}' is not strictly increasing"
            )));
        }
        if let Some(w) = &weights {
            if w.len() != nodes.len() {
                return Err(Error::Validation(format!(
                    "node set '{descriptor}': {} weights for {} nodes",
                    w.len(),
                    nodes.len()
                )));
            }
            if w.iter().any(|&wk| !(wk > 0.0)) {
                return Err(Error::Validation(format!(
                    "node set '{descriptor}' has non-positive weights"
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "node set '{descriptor}' weights sum to {sum}, not 1"
                )));
            }
        }
        Ok(NodeSet {
            nodes,
            weights,
            descriptor,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Dump the rule as CSV (`node,weight`); the weight field is left empty
    /// for plain interpolation node sets that carry no quadrature weights.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "node,weight")?;
        for (i, x) in self.nodes.iter().enumerate() {
            match &self.weights {
                Some(ws) => writeln!(w, "{x:.12e},{:.12e}", ws[i])?,
                None => writeln!(w, "{x:.12e},")?,
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Golub–Welsch from raw moments
// ---------------------------------------------------------------------------

/// Gauss nodes and weights of the distribution with raw moments
/// `m_0, ..., m_{2N-1}` (`moments[j]` is the j-th raw moment, `m_0 = 1`).
///
/// The moments are converted to the three-term recurrence coefficients of
/// the orthogonal polynomials by the Chebyshev algorithm — run in
/// double-double arithmetic because that conversion loses roughly one
/// decimal digit per degree on raw moments — and the Gauss rule is read off
/// the symmetric tridiagonal Jacobi matrix: nodes are its eigenvalues,
/// weights are `m_0` times the squared first eigenvector components.
///
/// The returned rule is verified in-function to integrate `x^j`,
/// `j <= 2N-1`, against the input moments to 1e-10 relative; failure of
/// that identity (possible only through catastrophic conditioning) is
/// reported as a numerical error rather than silently returned.
pub fn golub_welsch(moments: &[f64], n: usize) -> Result<NodeSet> {
    if n == 0 {
        return Err(Error::Validation("node count N must be at least 1".into()));
    }
    if moments.len() < 2 * n {
        return Err(Error::Validation(format!(
            "need at least {} moments for N = {n}, got {}",
            2 * n,
            moments.len()
        )));
    }
    if (moments[0] - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "moment sequence must be normalized (m_0 = 1), got m_0 = {}",
            moments[0]
        )));
    }

    let dd_moments: Vec<Dd> = moments[..2 * n].iter().map(|&m| Dd::from_f64(m)).collect();
    let (alpha, beta) = chebyshev_recurrence(&dd_moments, n)?;
    gauss_rule_from_recurrence(alpha, beta, &moments[..2 * n], format!("golub-welsch(N={n})"))
}

/// Jacobi-matrix eigensolve from three-term recurrence coefficients, plus
/// the quadrature-exactness audit against the generating moments.
fn gauss_rule_from_recurrence(
    alpha: Vec<f64>,
    beta: Vec<f64>,
    moments: &[f64],
    descriptor: String,
) -> Result<NodeSet> {
    let n = alpha.len();
    // Jacobi matrix: diagonal alpha_k, subdiagonal sqrt(beta_k), k >= 1.
    let sub: Vec<f64> = beta[1..].iter().map(|b| b.sqrt()).collect();
    let eig = eigen::symmetric_tridiagonal_eigen(alpha, sub)?;
    let nodes = eig.values;
    let weights: Vec<f64> = eig
        .first_components
        .iter()
        .map(|z| beta[0] * z * z)
        .collect();

    // Quadrature-exactness audit against the input moments.
    for j in 0..2 * n {
        let mut q = 0.0;
        let mut scale = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            q += w * x.powi(j as i32);
            scale += w * x.abs().powi(j as i32);
        }
        let tol = 1e-10 * scale.max(1.0);
        if (q - moments[j]).abs() > tol {
            return Err(Error::Numerical(format!(
                "Golub-Welsch rule failed the exactness audit: order-{j} moment \
                 reproduced as {q} vs {} (N = {n})",
                moments[j]
            )));
        }
    }

    NodeSet::new(nodes, Some(weights), descriptor)
}

/// Chebyshev algorithm: raw moments -> recurrence coefficients
/// `(alpha_k, beta_k)`, k = 0..n-1, in double-double arithmetic.
///
/// `beta_k = sigma_{k,k} / sigma_{k-1,k-1}` must stay positive; a
/// non-positive value means the moment Hankel matrix is not positive
/// definite (not a valid distribution), reported with the failing minor.
fn chebyshev_recurrence(moments: &[Dd], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let width = moments.len(); // 2n
    let mut alpha = vec![0.0_f64; n];
    let mut beta = vec![0.0_f64; n];

    let mut prev2: Vec<Dd> = vec![Dd::ZERO; width]; // sigma_{k-2, *}
    let mut prev: Vec<Dd> = moments.to_vec(); // sigma_{k-1, *}
    let mut alpha_dd = vec![Dd::ZERO; n];
    let mut beta_dd = vec![Dd::ZERO; n];

    alpha_dd[0] = prev[1].div(prev[0]);
    beta_dd[0] = prev[0];
    alpha[0] = alpha_dd[0].to_f64();
    beta[0] = beta_dd[0].to_f64();

    for k in 1..n {
        let mut row = vec![Dd::ZERO; width];
        for l in k..=(width - 1 - k) {
            // sigma_{k,l} = sigma_{k-1,l+1} - alpha_{k-1} sigma_{k-1,l}
            //                               - beta_{k-1} sigma_{k-2,l}
            row[l] = prev[l + 1]
                .sub(alpha_dd[k - 1].mul(prev[l]))
                .sub(beta_dd[k - 1].mul(prev2[l]));
        }
        if row[k].to_f64() <= 0.0 {
            return Err(Error::Validation(format!(
                "moment sequence is not positive definite: leading minor of order {} \
                 is non-positive",
                k + 1
            )));
        }
        alpha_dd[k] = row[k + 1].div(row[k]).sub(prev[k].div(prev[k - 1]));
        beta_dd[k] = row[k].div(prev[k - 1]);
        alpha[k] = alpha_dd[k].to_f64();
        beta[k] = beta_dd[k].to_f64();
        prev2 = std::mem::replace(&mut prev, row);
    }
    Ok((alpha, beta))
}

// ---------------------------------------------------------------------------
// Gaussian and truncated-Gaussian nodes
// ---------------------------------------------------------------------------

/// Gauss–Hermite nodes for `N(mu, sigma^2)`: the affine image
/// `mu + sigma * z_k` of the zeros of the probabilists' Hermite polynomial
/// `He_N`, with weights normalized to sum to 1.
///
/// Built directly from the Hermite three-term recurrence
/// (`alpha_k = 0, beta_k = k`), bypassing the moment route entirely, so it
/// doubles as an independent cross-check of [`golub_welsch`].
pub fn hermite_nodes(mu: f64, sigma: f64, n: usize) -> Result<NodeSet> {
    if !(sigma > 0.0) {
        return Err(Error::Validation(format!(
            "hermite_nodes requires sigma > 0, got {sigma}"
        )));
    }
    if n == 0 {
        return Err(Error::Validation("node count N must be at least 1".into()));
    }
    let diag = vec![0.0; n];
    let sub: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let eig = eigen::symmetric_tridiagonal_eigen(diag, sub)?;
    let nodes: Vec<f64> = eig.values.iter().map(|z| mu + sigma * z).collect();
    let weights: Vec<f64> = eig.first_components.iter().map(|z| z * z).collect();
    NodeSet::new(
        nodes,
        Some(weights),
        format!("gauss-hermite(N={n}, mu={mu}, sigma={sigma})"),
    )
}

/// Which tail a one-sided truncation keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationSide {
    /// `X | X < b`: the lower tail is kept, `b` is an upper bound.
    Upper,
    /// `X | X > b`: the upper tail is kept, `b` is a lower bound.
    Lower,
}

/// Raw moments `m_0..m_order` of the upper-truncated normal
/// `X | X < b`, `X ~ N(mu, sigma^2)`.
///
/// Standardized moments come from the recursion
/// `I_k = -beta^{k-1} phi(beta) + (k-1) I_{k-2}` for
/// `I_k = ∫_{-inf}^{beta} z^k phi(z) dz` (`I_0 = Phi(beta)`,
/// `I_1 = -phi(beta)`), then `M_k = I_k / I_0`; the `N(mu, sigma^2)` moments
/// follow by binomial expansion of `(mu + sigma Z)^k`.
pub fn truncated_normal_moments(mu: f64, sigma: f64, b: f64, order: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Validation(format!(
            "truncated_normal_moments requires sigma > 0, got {sigma}"
        )));
    }
    let beta = (b - mu) / sigma;
    let std_moments = truncated_std_upper_moments(beta, order)?;
    let mut out = Vec::with_capacity(order + 1);
    for j in 0..=order {
        let mut m = 0.0;
        for (l, std_m) in std_moments.iter().enumerate().take(j + 1) {
            m += binomial(j, l) * mu.powi((j - l) as i32) * sigma.powi(l as i32) * std_m;
        }
        out.push(m);
    }
    Ok(out)
}

/// Standardized moments `M_k = E[Z^k | Z < beta]`, `Z ~ N(0,1)`.
fn truncated_std_upper_moments(beta: f64, order: usize) -> Result<Vec<f64>> {
    Ok(truncated_std_upper_moments_dd(beta, order)?
        .iter()
        .map(|m| m.to_f64())
        .collect())
}

/// [`truncated_std_upper_moments`] carried in double-double end to end.
///
/// The moment-to-recurrence conversion behind the truncated Gauss rules
/// amplifies input error by roughly a digit per polynomial degree, so `f64`
/// moments — however exactly the recursion is evaluated afterwards — cannot
/// reach the N = 15 rules the Bermudan experiments need. Double-double
/// inputs keep ~16 digits in hand through order 29.
fn truncated_std_upper_moments_dd(beta: f64, order: usize) -> Result<Vec<Dd>> {
    let mass = std_normal_cdf_dd(beta);
    if mass.to_f64() < 1e-12 {
        return Err(Error::Numerical(format!(
            "degenerate truncation: P(Z < {beta}) = {:e} leaves no probability mass",
            mass.to_f64()
        )));
    }
    let pdf = std_normal_pdf_dd(beta);
    let beta_dd = Dd::from_f64(beta);
    let mut i_k = vec![Dd::ZERO; order.max(1) + 1];
    i_k[0] = mass;
    i_k[1] = pdf.neg();
    let mut beta_pow = beta_dd; // beta^(k-1) entering step k = 2
    for k in 2..=order {
        i_k[k] = Dd::from_f64(k as f64 - 1.0)
            .mul(i_k[k - 2])
            .sub(beta_pow.mul(pdf));
        beta_pow = beta_pow.mul(beta_dd);
    }
    Ok(i_k[..=order].iter().map(|i| i.div(mass)).collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    let mut c = 1.0;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c
}

/// Gauss nodes of a one-sided truncated normal law: the Golub–Welsch
/// construction on the truncated moments, carried in double-double from the
/// moment recursion through the Chebyshev algorithm (see
/// [`truncated_std_upper_moments_dd`] for why `f64` moments are not enough).
///
/// Lower truncations are handled by reflection: if `Z | Z > a` is wanted,
/// the rule for `W = -Z | W < -a` is built and mirrored, so a single moment
/// recursion serves both sides.
pub fn truncated_normal_nodes(
    mu: f64,
    sigma: f64,
    bound: f64,
    side: TruncationSide,
    n: usize,
) -> Result<NodeSet> {
    if !(sigma > 0.0) {
        return Err(Error::Validation(format!(
            "truncated_normal_nodes requires sigma > 0, got {sigma}"
        )));
    }
    if n == 0 {
        return Err(Error::Validation("node count N must be at least 1".into()));
    }
    let beta = (bound - mu) / sigma;
    // Moments of the standardized truncated variable; reflected for Lower.
    let std_beta = match side {
        TruncationSide::Upper => beta,
        TruncationSide::Lower => -beta,
    };
    let mut std_moments = truncated_std_upper_moments_dd(std_beta, 2 * n - 1)?;
    if side == TruncationSide::Lower {
        for (k, m) in std_moments.iter_mut().enumerate() {
            if k % 2 == 1 {
                *m = m.neg();
            }
        }
    }
    let (alpha, bcoef) = chebyshev_recurrence(&std_moments, n)?;
    let audit: Vec<f64> = std_moments.iter().map(|m| m.to_f64()).collect();
    let std_rule =
        gauss_rule_from_recurrence(alpha, bcoef, &audit, format!("golub-welsch(N={n})"))?;
    let nodes: Vec<f64> = std_rule.nodes().iter().map(|z| mu + sigma * z).collect();
    let weights = std_rule.weights().map(|w| w.to_vec());
    let side_txt = match side {
        TruncationSide::Upper => "upper",
        TruncationSide::Lower => "lower",
    };
    NodeSet::new(
        nodes,
        weights,
        format!("truncated-normal(N={n}, mu={mu}, sigma={sigma}, {side_txt} bound {bound})"),
    )
}

// ---------------------------------------------------------------------------
// Chebyshev nodes
// ---------------------------------------------------------------------------

/// Which Chebyshev point family to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChebyshevKind {
    /// Chebyshev–Lobatto extrema `cos(k pi / (N-1))`, including the
    /// interval endpoints. The default.
    Lobatto,
    /// Chebyshev roots `cos((2k-1) pi / (2N))`, strictly interior.
    Roots,
}

/// Chebyshev–Lobatto nodes scaled to `[a, b]`, sorted ascending.
pub fn chebyshev_nodes(a: f64, b: f64, n: usize) -> Result<NodeSet> {
    chebyshev_nodes_of(a, b, n, ChebyshevKind::Lobatto)
}

/// Chebyshev nodes of the requested family scaled to `[a, b]`.
pub fn chebyshev_nodes_of(a: f64, b: f64, n: usize, kind: ChebyshevKind) -> Result<NodeSet> {
    if !(a < b) {
        return Err(Error::Validation(format!(
            "chebyshev_nodes requires a < b, got [{a}, {b}]"
        )));
    }
    let min_n = match kind {
        ChebyshevKind::Lobatto => 2,
        ChebyshevKind::Roots => 1,
    };
    if n < min_n {
        return Err(Error::Validation(format!(
            "chebyshev_nodes ({kind:?}) requires N >= {min_n}, got {n}"
        )));
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let pi = std::f64::consts::PI;
    // -cos(theta_k) with theta increasing produces ascending nodes directly.
    let nodes: Vec<f64> = (0..n)
        .map(|k| {
            let t = match kind {
                ChebyshevKind::Lobatto => -((k as f64) * pi / (n as f64 - 1.0)).cos(),
                ChebyshevKind::Roots => -((2.0 * k as f64 + 1.0) * pi / (2.0 * n as f64)).cos(),
            };
            mid + half * t
        })
        .collect();
    NodeSet::new(nodes, None, format!("chebyshev-{kind:?}(N={n}, [{a}, {b}])"))
}

// ---------------------------------------------------------------------------
// Nested subsets
// ---------------------------------------------------------------------------

/// The centered `d`-node subset of an `N`-node set, obtained by removing
/// nodes alternately from either end: 1-based indices
/// `1 + floor((N-d)/2)` through `N - ceil((N-d)/2)`.
///
/// Quadrature weights do not restrict to subsets and are dropped.
pub fn nested_subset(set: &NodeSet, d: usize) -> Result<NodeSet> {
    let n = set.len();
    if d == 0 {
        return Err(Error::Validation("subset size d must be at least 1".into()));
    }
    if d > n {
        return Err(Error::Validation(format!(
            "subset size d = {d} exceeds node count N = {n}"
        )));
    }
    let lo = (n - d) / 2; // 0-based first index
    let nodes = set.nodes()[lo..lo + d].to_vec();
    NodeSet::new(
        nodes,
        None,
        format!("nested(d={d} of {})", set.descriptor()),
    )
}

// ---------------------------------------------------------------------------
// Barycentric Lagrange surrogates
// ---------------------------------------------------------------------------

/// Common interface of the one-level and two-level surrogates.
pub trait Surrogate {
    /// Evaluate at `x`. Evaluations outside the node span are permitted
    /// (paths can land beyond the outermost node) but counted, because
    /// polynomial extrapolation degrades quickly.
    fn evaluate(&self, x: f64) -> f64;

    /// Number of evaluations so far that fell outside the node span.
    fn extrapolations(&self) -> u64;
}

/// A polynomial of degree N-1 in barycentric Lagrange form: nodes, exact
/// values at the nodes, and precomputed barycentric weights.
///
/// Evaluation at a node returns the stored value exactly; elsewhere the
/// numerically stable second barycentric formula is used.
#[derive(Debug)]
pub struct PolynomialApprox {
    nodes: Vec<f64>,
    values: Vec<f64>,
    bary_weights: Vec<f64>,
    extrapolations: AtomicU64,
}

impl Clone for PolynomialApprox {
    fn clone(&self) -> Self {
        PolynomialApprox {
            nodes: self.nodes.clone(),
            values: self.values.clone(),
            bary_weights: self.bary_weights.clone(),
            extrapolations: AtomicU64::new(self.extrapolations.load(Ordering::Relaxed)),
        }
    }
}

/// Interpolate `valuator` at the given nodes: the resulting polynomial of
/// degree N-1 calls the valuator exactly N times, once per node.
///
/// Barycentric weights are computed with node differences scaled by the
/// interval capacity `(max - min)/4`, which keeps them in floating-point
/// range for any realistic node count; the common scale factor cancels in
/// the barycentric ratio.
pub fn fit(nodes: &NodeSet, mut valuator: impl FnMut(f64) -> f64) -> PolynomialApprox {
    let xs = nodes.nodes();
    let n = xs.len();
    let values: Vec<f64> = xs.iter().map(|&x| valuator(x)).collect();
    let scale = if n > 1 {
        (xs[n - 1] - xs[0]) / 4.0
    } else {
        1.0
    };
    let bary_weights: Vec<f64> = (0..n)
        .map(|k| {
            let mut w = 1.0;
            for j in 0..n {
                if j != k {
                    w *= (xs[k] - xs[j]) / scale;
                }
            }
            1.0 / w
        })
        .collect();
    PolynomialApprox {
        nodes: xs.to_vec(),
        values,
        bary_weights,
        extrapolations: AtomicU64::new(0),
    }
}

impl PolynomialApprox {
    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Evaluation without touching the extrapolation counter; shared by
    /// [`Surrogate::evaluate`] and the two-level surrogate.
    fn eval_uncounted(&self, x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xk, &vk), &wk) in self.nodes.iter().zip(&self.values).zip(&self.bary_weights) {
            let diff = x - xk;
            if diff == 0.0 {
                return vk;
            }
            let q = wk / diff;
            num += q * vk;
            den += q;
        }
        num / den
    }

    fn in_span(&self, x: f64) -> bool {
        x >= self.nodes[0] && x <= self.nodes[self.nodes.len() - 1]
    }
}

impl Surrogate for PolynomialApprox {
    fn evaluate(&self, x: f64) -> f64 {
        if !self.in_span(x) {
            self.extrapolations.fetch_add(1, Ordering::Relaxed);
        }
        self.eval_uncounted(x)
    }

    fn extrapolations(&self) -> u64 {
        self.extrapolations.load(Ordering::Relaxed)
    }
}

/// Two-level surrogate `g + h`: a base polynomial `g` (degree N-1) plus a
/// low-order correction `h` (degree d-1) interpolating the residual of a
/// second valuation function against `g` at d nodes.
///
/// By construction, evaluating at any of the d correction nodes returns the
/// second function's exact value there: `g(x_j) + (V_i(x_j) - g(x_j))`.
#[derive(Debug)]
pub struct DifferenceApprox {
    base: PolynomialApprox,
    correction: PolynomialApprox,
    /// Single-level equivalent, present when the correction order reaches
    /// the base order (see [`fit_difference`]).
    collapsed: Option<PolynomialApprox>,
    extrapolations: AtomicU64,
}

impl Clone for DifferenceApprox {
    fn clone(&self) -> Self {
        DifferenceApprox {
            base: self.base.clone(),
            correction: self.correction.clone(),
            collapsed: self.collapsed.clone(),
            extrapolations: AtomicU64::new(self.extrapolations.load(Ordering::Relaxed)),
        }
    }
}

/// Build the two-level surrogate `g + h_i` for a shocked valuation `V_i`:
/// `h_i` interpolates `V_i - g` at the `d` nodes of `nodes_d`, consuming
/// exactly `d` calls of the (expensive) shocked valuator.
///
/// When `d` reaches the base order, `g + h_i` is algebraically the plain
/// interpolant of `V_i` on `nodes_d`; in that case the interpolant of the
/// raw shocked values is stored and evaluated directly, so the coincidence
/// with a full-order fit holds to machine precision instead of carrying the
/// double-evaluation round-off (which the 1/ΔK factor downstream would
/// amplify).
pub fn fit_difference(
    g: &PolynomialApprox,
    nodes_d: &NodeSet,
    mut shocked_valuator: impl FnMut(f64) -> f64,
) -> DifferenceApprox {
    let raw: Vec<f64> = nodes_d.nodes().iter().map(|&x| shocked_valuator(x)).collect();
    let mut raw_iter = raw.iter().copied();
    let correction = fit(nodes_d, |x| raw_iter.next().unwrap() - g.eval_uncounted(x));
    let collapsed = if nodes_d.len() >= g.nodes().len() {
        let mut it = raw.iter().copied();
        Some(fit(nodes_d, |_| it.next().unwrap()))
    } else {
        None
    };
    DifferenceApprox {
        base: g.clone(),
        correction,
        collapsed,
        extrapolations: AtomicU64::new(0),
    }
}

impl DifferenceApprox {
    pub fn base(&self) -> &PolynomialApprox {
        &self.base
    }

    pub fn correction(&self) -> &PolynomialApprox {
        &self.correction
    }
}

impl Surrogate for DifferenceApprox {
    fn evaluate(&self, x: f64) -> f64 {
        // Extrapolation is judged against the full base span; the narrower
        // correction span lies inside it by construction.
        if !self.base.in_span(x) {
            self.extrapolations.fetch_add(1, Ordering::Relaxed);
        }
        match &self.collapsed {
            Some(p) => p.eval_uncounted(x),
            None => self.base.eval_uncounted(x) + self.correction.eval_uncounted(x),
        }
    }

    fn extrapolations(&self) -> u64 {
        self.extrapolations.load(Ordering::Relaxed)
    }
}

// ---------------------------------------------------------------------------
// Gauss–Legendre (deterministic quadrature helper)
// ---------------------------------------------------------------------------

/// Gauss–Legendre rule on [0, 1]: `n` nodes and weights (weights sum to 1).
///
/// Built from the Legendre recurrence `beta_k = k^2 / (4k^2 - 1)` through
/// the same tridiagonal eigensolver as the distributional rules. Used for
/// the deterministic time integrals of the short-rate drift.
pub(crate) fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let sub: Vec<f64> = (1..n)
        .map(|k| {
            let k2 = (k * k) as f64;
            (k2 / (4.0 * k2 - 1.0)).sqrt()
        })
        .collect();
    let eig = eigen::symmetric_tridiagonal_eigen(diag, sub)
        .expect("Legendre Jacobi matrix is well-conditioned");
    let nodes = eig.values.iter().map(|z| 0.5 * (z + 1.0)).collect();
    // Weights on [-1,1] are 2 z_k^2; the map to [0,1] halves them.
    let weights = eig.first_components.iter().map(|z| z * z).collect();
    (nodes, weights)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
