//! Spin models and their spectra: generalized Ising Hamiltonians with
//! k-body couplings, periodic XYZ/XXX chains, dimerized chains, and the
//! inverse problem of choosing Ising couplings that realize a target
//! spectrum.
//!
//! Bit convention used throughout: configuration index `b` assigns spin
//! `s_i = +1` to site `i` when bit `(n-1-i)` of `b` is clear, so site 0
//! occupies the most significant bit and `b = 0` is the all-up state.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::EnergySpectrum;

/// Diagonal models materialize all 2^n energies directly.
pub const MAX_DIAGONAL_SPINS: usize = 24;
/// Dense diagonalization holds a 2^n x 2^n complex matrix.
pub const MAX_DENSE_SPINS: usize = 12;
/// Inverse design solves a (2^n - 1)-dimensional linear system.
pub const MAX_DESIGN_SPINS: usize = 10;
/// Dimerized chains enumerate 2^n closed-form levels without a matrix.
pub const MAX_DIMER_SPINS: usize = 20;
/// Relative singular-value cutoff for the numerical rank of the design
/// matrix.
pub const RANK_TOLERANCE: f64 = 1e-9;

fn spin(b: usize, n: usize, i: usize) -> f64 {
    if b >> (n - 1 - i) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The support of one coupling term: a nonempty, strictly increasing
/// set of site indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Hyperedge {
    sites: Vec<usize>,
}

impl Hyperedge {
    pub fn new(sites: Vec<usize>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidModel(
                "a hyperedge needs at least one site".into(),
            ));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(format!(
                "hyperedge sites must be strictly increasing, got {sites:?}"
            )));
        }
        Ok(Self { sites })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Number of sites the coupling acts on (the k in k-body).
    pub fn order(&self) -> usize {
        self.sites.len()
    }

    fn mask(&self, n: usize) -> usize {
        self.sites.iter().fold(0, |m, &i| m | 1 << (n - 1 - i))
    }
}

impl Ord for Hyperedge {
    // Cardinality first, then lexicographic: groups couplings into
    // 1-body, 2-body, ... blocks, which fixes the meaning of sign
    // tuples quoted per block elsewhere in the crate.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sites
            .len()
            .cmp(&other.sites.len())
            .then_with(|| self.sites.cmp(&other.sites))
    }
}

impl PartialOrd for Hyperedge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TryFrom<Vec<usize>> for Hyperedge {
    type Error = Error;
    fn try_from(sites: Vec<usize>) -> Result<Self> {
        Self::new(sites)
    }
}

impl From<Hyperedge> for Vec<usize> {
    fn from(edge: Hyperedge) -> Self {
        edge.sites
    }
}

/// Every nonempty subset of `{0..n-1}` as a hyperedge, in canonical
/// order.
pub fn hyperedges(n: usize) -> Result<Vec<Hyperedge>> {
    if n == 0 || n > 16 {
        return Err(Error::Capacity {
            what: "hyperedge enumeration spin count",
            limit: 16,
            requested: n,
        });
    }
    let mut edges: Vec<Hyperedge> = (1..1usize << n)
        .map(|m| Hyperedge {
            sites: (0..n).filter(|i| m >> i & 1 == 1).collect(),
        })
        .collect();
    edges.sort();
    Ok(edges)
}

/// A diagonal spin Hamiltonian: products of Z operators weighted by
/// real couplings, one per hyperedge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIsing", into = "RawIsing")]
pub struct GeneralizedIsing {
    n: usize,
    couplings: BTreeMap<Hyperedge, f64>,
}

impl GeneralizedIsing {
    /// Any sparse subset of hyperedges is allowed; duplicates are
    /// rejected rather than summed so that files stating a coupling
    /// twice fail loudly.
    pub fn new(n: usize, couplings: impl IntoIterator<Item = (Hyperedge, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one spin".into()));
        }
        let mut map = BTreeMap::new();
        for (edge, j) in couplings {
            if *edge.sites.last().expect("edges are nonempty") >= n {
                return Err(Error::InvalidModel(format!(
                    "hyperedge {:?} references a site outside 0..{n}",
                    edge.sites
                )));
            }
            if !j.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "coupling on {:?} is not finite",
                    edge.sites
                )));
            }
            if map.insert(edge.clone(), j).is_some() {
                return Err(Error::InvalidModel(format!(
                    "duplicate coupling on {:?}",
                    edge.sites
                )));
            }
        }
        Ok(Self { n, couplings: map })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn couplings(&self) -> &BTreeMap<Hyperedge, f64> {
        &self.couplings
    }

    pub fn coupling(&self, edge: &Hyperedge) -> Option<f64> {
        self.couplings.get(edge).copied()
    }
}

#[derive(Serialize, Deserialize)]
struct RawCoupling {
    sites: Vec<usize>,
    j: f64,
}

#[derive(Serialize, Deserialize)]
struct RawIsing {
    n: usize,
    couplings: Vec<RawCoupling>,
}

impl TryFrom<RawIsing> for GeneralizedIsing {
    type Error = Error;
    fn try_from(raw: RawIsing) -> Result<Self> {
        let pairs = raw
            .couplings
            .into_iter()
            .map(|c| Ok((Hyperedge::new(c.sites)?, c.j)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(raw.n, pairs)
    }
}

impl From<GeneralizedIsing> for RawIsing {
    fn from(model: GeneralizedIsing) -> Self {
        RawIsing {
            n: model.n,
            couplings: model
                .couplings
                .into_iter()
                .map(|(edge, j)| RawCoupling {
                    sites: edge.sites,
                    j,
                })
                .collect(),
        }
    }
}

/// Energies in configuration-index order: neither pinned nor sorted.
pub(crate) fn ising_energies(model: &GeneralizedIsing) -> Result<Vec<f64>> {
    let n = model.n;
    if n > MAX_DIAGONAL_SPINS {
        return Err(Error::Capacity {
            what: "diagonal spectrum spin count",
            limit: MAX_DIAGONAL_SPINS,
            requested: n,
        });
    }
    let terms: Vec<(usize, f64)> = model
        .couplings
        .iter()
        .map(|(edge, &j)| (edge.mask(n), j))
        .collect();
    Ok((0..1usize << n)
        .map(|b| {
            terms
                .iter()
                .map(|&(mask, j)| {
                    // Each flipped spin in the edge negates the product.
                    if (b & mask).count_ones() % 2 == 0 {
                        j
                    } else {
                        -j
                    }
                })
                .sum()
        })
        .collect())
}

pub fn ising_spectrum(model: &GeneralizedIsing) -> Result<EnergySpectrum> {
    EnergySpectrum::pinned(ising_energies(model)?)
}

/// Coefficient matrix of the inverse design problem with the redundant
/// all-down row removed: entry (b, e) is the spin product of edge e in
/// configuration b.
fn design_matrix(n: usize, edges: &[Hyperedge]) -> DMatrix<f64> {
    let rows = (1usize << n) - 1;
    let mut a = DMatrix::zeros(rows, edges.len());
    for (col, edge) in edges.iter().enumerate() {
        let mask = edge.mask(n);
        for b in 0..rows {
            a[(b, col)] = if (b & mask).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
        }
    }
    a
}

/// Couplings realizing a target spectrum, together with the uniform
/// shift applied to the target and the verification residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsingDesign {
    pub model: GeneralizedIsing,
    /// `ising_spectrum(model)` reproduces `target - shift` before
    /// pinning; pinned spectra agree exactly.
    pub shift: f64,
    pub max_residual: f64,
}

/// Solves for the couplings over all 2^n - 1 hyperedges whose diagonal
/// Hamiltonian realizes `target`, assigning the k-th smallest target
/// level to configuration index k.
///
/// Coupling-only spectra always sum to zero over the configurations, so
/// the target is first shifted to zero mean (this also makes the
/// all-down row of the design system redundant, which is why it can be
/// dropped). The returned design carries that shift and the round-trip
/// residual of the reconstructed spectrum.
pub fn design_couplings(n: usize, target: &EnergySpectrum) -> Result<IsingDesign> {
    if n == 0 || n > MAX_DESIGN_SPINS {
        return Err(Error::Capacity {
            what: "inverse design spin count",
            limit: MAX_DESIGN_SPINS,
            requested: n,
        });
    }
    let dim = 1usize << n;
    if target.len() != dim {
        return Err(Error::InvalidConfig(format!(
            "target spectrum has {} levels, expected 2^{n} = {dim}",
            target.len()
        )));
    }
    let shift = target.levels().iter().sum::<f64>() / dim as f64;
    let shifted: Vec<f64> = target.levels().iter().map(|e| e - shift).collect();

    let edges = hyperedges(n)?;
    let a = design_matrix(n, &edges);
    let rhs = DVector::from_iterator(dim - 1, shifted[..dim - 1].iter().copied());
    let Some(j) = a.clone().full_piv_lu().solve(&rhs) else {
        return Err(Error::SingularDesign {
            rank: numerical_rank(&a),
            expected: dim - 1,
        });
    };

    let model = GeneralizedIsing::new(n, edges.into_iter().zip(j.iter().copied()))?;
    let realized = ising_spectrum(&model)?;
    let scale = target.levels().iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let max_residual = realized
        .levels()
        .iter()
        .zip(target.levels())
        .map(|(r, t)| (r - t).abs())
        .fold(0.0, f64::max);
    if max_residual > 1e-9 * scale {
        return Err(Error::InvalidModel(format!(
            "design round trip residual {max_residual:.3e} exceeds 1e-9 of the target scale"
        )));
    }
    Ok(IsingDesign {
        model,
        shift,
        max_residual,
    })
}

fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let singular = a.clone().svd(false, false).singular_values;
    let largest = singular.iter().fold(0.0f64, |m, &s| m.max(s));
    singular
        .iter()
        .filter(|&&s| s > RANK_TOLERANCE * largest)
        .count()
}

/// Numerical rank of the truncated design matrix; full rank 2^n - 1
/// means every zero-mean target is realizable.
pub fn rank_check(n: usize) -> Result<usize> {
    if n == 0 || n > MAX_DESIGN_SPINS {
        return Err(Error::Capacity {
            what: "inverse design spin count",
            limit: MAX_DESIGN_SPINS,
            requested: n,
        });
    }
    let edges = hyperedges(n)?;
    Ok(numerical_rank(&design_matrix(n, &edges)))
}

fn check_lengths(n: usize, arrays: &[(&str, usize)]) -> Result<()> {
    for &(name, len) in arrays {
        if len != n {
            return Err(Error::InvalidModel(format!(
                "{name} has length {len}, expected {n}"
            )));
        }
    }
    Ok(())
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(format!("{name} contains {v}")));
    }
    Ok(())
}

/// Periodic chain with independent X, Y, Z couplings per bond and a
/// free field vector per site. Bond `i` couples sites `(i, (i+1) % n)`;
/// for n = 2 both bonds join the same pair and their couplings add.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawXyz", into = "RawXyz")]
pub struct XYZChain {
    n: usize,
    jx: Vec<f64>,
    jy: Vec<f64>,
    jz: Vec<f64>,
    hx: Vec<f64>,
    hy: Vec<f64>,
    hz: Vec<f64>,
}

impl XYZChain {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        jx: Vec<f64>,
        jy: Vec<f64>,
        jz: Vec<f64>,
        hx: Vec<f64>,
        hy: Vec<f64>,
        hz: Vec<f64>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidModel(
                "a chain needs at least two sites".into(),
            ));
        }
        check_lengths(
            n,
            &[
                ("jx", jx.len()),
                ("jy", jy.len()),
                ("jz", jz.len()),
                ("hx", hx.len()),
                ("hy", hy.len()),
                ("hz", hz.len()),
            ],
        )?;
        for (name, values) in [
            ("jx", &jx),
            ("jy", &jy),
            ("jz", &jz),
            ("hx", &hx),
            ("hy", &hy),
            ("hz", &hz),
        ] {
            check_finite(name, values)?;
        }
        Ok(Self {
            n,
            jx,
            jy,
            jz,
            hx,
            hy,
            hz,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn jx(&self) -> &[f64] {
        &self.jx
    }
    pub fn jy(&self) -> &[f64] {
        &self.jy
    }
    pub fn jz(&self) -> &[f64] {
        &self.jz
    }
    pub fn hx(&self) -> &[f64] {
        &self.hx
    }
    pub fn hy(&self) -> &[f64] {
        &self.hy
    }
    pub fn hz(&self) -> &[f64] {
        &self.hz
    }

    /// True when every transverse parameter is exactly zero, so the
    /// Hamiltonian is diagonal in the computational basis.
    pub fn is_diagonal(&self) -> bool {
        self.jx
            .iter()
            .chain(&self.jy)
            .chain(&self.hx)
            .chain(&self.hy)
            .all(|&v| v == 0.0)
    }
}

#[derive(Serialize, Deserialize)]
struct RawXyz {
    n: usize,
    jx: Vec<f64>,
    jy: Vec<f64>,
    jz: Vec<f64>,
    hx: Vec<f64>,
    hy: Vec<f64>,
    hz: Vec<f64>,
}

impl TryFrom<RawXyz> for XYZChain {
    type Error = Error;
    fn try_from(r: RawXyz) -> Result<Self> {
        Self::new(r.n, r.jx, r.jy, r.jz, r.hx, r.hy, r.hz)
    }
}

impl From<XYZChain> for RawXyz {
    fn from(c: XYZChain) -> Self {
        RawXyz {
            n: c.n,
            jx: c.jx,
            jy: c.jy,
            jz: c.jz,
            hx: c.hx,
            hy: c.hy,
            hz: c.hz,
        }
    }
}

/// Isotropic Heisenberg chain: one coupling per bond shared by the X,
/// Y, Z parts, free field vector per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawXxx", into = "RawXxx")]
pub struct XXXChain {
    n: usize,
    j: Vec<f64>,
    hx: Vec<f64>,
    hy: Vec<f64>,
    hz: Vec<f64>,
}

impl XXXChain {
    pub fn new(n: usize, j: Vec<f64>, hx: Vec<f64>, hy: Vec<f64>, hz: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidModel(
                "a chain needs at least two sites".into(),
            ));
        }
        check_lengths(
            n,
            &[
                ("j", j.len()),
                ("hx", hx.len()),
                ("hy", hy.len()),
                ("hz", hz.len()),
            ],
        )?;
        for (name, values) in [("j", &j), ("hx", &hx), ("hy", &hy), ("hz", &hz)] {
            check_finite(name, values)?;
        }
        Ok(Self { n, j, hx, hy, hz })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn j(&self) -> &[f64] {
        &self.j
    }
    pub fn hx(&self) -> &[f64] {
        &self.hx
    }
    pub fn hy(&self) -> &[f64] {
        &self.hy
    }
    pub fn hz(&self) -> &[f64] {
        &self.hz
    }

    pub fn to_xyz(&self) -> XYZChain {
        XYZChain {
            n: self.n,
            jx: self.j.clone(),
            jy: self.j.clone(),
            jz: self.j.clone(),
            hx: self.hx.clone(),
            hy: self.hy.clone(),
            hz: self.hz.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawXxx {
    n: usize,
    j: Vec<f64>,
    hx: Vec<f64>,
    hy: Vec<f64>,
    hz: Vec<f64>,
}

impl TryFrom<RawXxx> for XXXChain {
    type Error = Error;
    fn try_from(r: RawXxx) -> Result<Self> {
        Self::new(r.n, r.j, r.hx, r.hy, r.hz)
    }
}

impl From<XXXChain> for RawXxx {
    fn from(c: XXXChain) -> Self {
        RawXxx {
            n: c.n,
            j: c.j,
            hx: c.hx,
            hy: c.hy,
            hz: c.hz,
        }
    }
}

/// Fully dimerized Heisenberg chain: isolated pairs (2k, 2k+1) with
/// positive couplings and no fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDimer", into = "RawDimer")]
pub struct DimerChain {
    n: usize,
    j: Vec<f64>,
}

impl DimerChain {
    pub fn new(n: usize, j: Vec<f64>) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidModel(format!(
                "dimerized chain needs an even number of sites, got {n}"
            )));
        }
        if j.len() != n / 2 {
            return Err(Error::InvalidModel(format!(
                "expected {} dimer couplings, got {}",
                n / 2,
                j.len()
            )));
        }
        if let Some(v) = j.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "dimer couplings must be positive and finite, got {v}"
            )));
        }
        Ok(Self { n, j })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn j(&self) -> &[f64] {
        &self.j
    }

    /// The same model as a periodic XXX chain: couplings on even bonds,
    /// zero elsewhere, zero fields.
    pub fn to_xxx(&self) -> XXXChain {
        let mut j = vec![0.0; self.n];
        for (k, &jk) in self.j.iter().enumerate() {
            j[2 * k] = jk;
        }
        XXXChain {
            n: self.n,
            j,
            hx: vec![0.0; self.n],
            hy: vec![0.0; self.n],
            hz: vec![0.0; self.n],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawDimer {
    n: usize,
    j: Vec<f64>,
}

impl TryFrom<RawDimer> for DimerChain {
    type Error = Error;
    fn try_from(r: RawDimer) -> Result<Self> {
        Self::new(r.n, r.j)
    }
}

impl From<DimerChain> for RawDimer {
    fn from(c: DimerChain) -> Self {
        RawDimer { n: c.n, j: c.j }
    }
}

/// Any spin model the toolkit can diagonalize, as stored in model
/// files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SpinModel {
    Ising(GeneralizedIsing),
    Xyz(XYZChain),
    Xxx(XXXChain),
    Dimer(DimerChain),
}

impl SpinModel {
    pub fn n(&self) -> usize {
        match self {
            SpinModel::Ising(m) => m.n,
            SpinModel::Xyz(c) => c.n,
            SpinModel::Xxx(c) => c.n,
            SpinModel::Dimer(c) => c.n,
        }
    }
}

/// Full energy spectrum of a model, pinned and sorted.
///
/// Diagonal models (generalized Ising, chains whose transverse
/// parameters are exactly zero) avoid the eigensolver and admit larger
/// sizes; dimerized chains use their closed form. Everything else is
/// dense Hermitian diagonalization, capped at n = 12.
pub fn chain_spectrum(model: &SpinModel) -> Result<EnergySpectrum> {
    EnergySpectrum::pinned(raw_spectrum_levels(model)?)
}

/// Unpinned, unsorted eigenvalues: the hot path for optimizers.
pub(crate) fn raw_spectrum_levels(model: &SpinModel) -> Result<Vec<f64>> {
    match model {
        SpinModel::Ising(m) => ising_energies(m),
        SpinModel::Dimer(d) => dimer_levels(d),
        SpinModel::Xyz(c) => xyz_levels(c),
        SpinModel::Xxx(c) => xyz_levels(&c.to_xyz()),
    }
}

fn xyz_levels(c: &XYZChain) -> Result<Vec<f64>> {
    if c.is_diagonal() {
        return diagonal_levels(c);
    }
    if c.n > MAX_DENSE_SPINS {
        return Err(Error::Capacity {
            what: "dense diagonalization spin count",
            limit: MAX_DENSE_SPINS,
            requested: c.n,
        });
    }
    let h = dense_hamiltonian(c);
    let dim = h.nrows();
    for r in 0..dim {
        for col in 0..r {
            assert!(
                h[(r, col)] == h[(col, r)].conj(),
                "chain Hamiltonian must be Hermitian"
            );
        }
    }
    Ok(h.symmetric_eigen().eigenvalues.iter().copied().collect())
}

fn diagonal_levels(c: &XYZChain) -> Result<Vec<f64>> {
    let n = c.n;
    if n > MAX_DIAGONAL_SPINS {
        return Err(Error::Capacity {
            what: "diagonal spectrum spin count",
            limit: MAX_DIAGONAL_SPINS,
            requested: n,
        });
    }
    Ok((0..1usize << n)
        .map(|b| {
            (0..n)
                .map(|i| {
                    let si = spin(b, n, i);
                    c.jz[i] * si * spin(b, n, (i + 1) % n) + c.hz[i] * si
                })
                .sum()
        })
        .collect())
}

fn dense_hamiltonian(c: &XYZChain) -> DMatrix<Complex<f64>> {
    let n = c.n;
    let dim = 1usize << n;
    let mut h = DMatrix::from_element(dim, dim, Complex::new(0.0, 0.0));
    for b in 0..dim {
        let mut diag = 0.0;
        for i in 0..n {
            let si = spin(b, n, i);
            let ip = (i + 1) % n;
            let sip = spin(b, n, ip);
            diag += c.jz[i] * si * sip + c.hz[i] * si;
            // XX keeps amplitude 1 on the double flip; YY picks up
            // (i s_i)(i s_ip) = -s_i s_ip, still real.
            let flip2 = 1 << (n - 1 - i) | 1 << (n - 1 - ip);
            h[(b ^ flip2, b)] += Complex::new(c.jx[i] - c.jy[i] * si * sip, 0.0);
            // X flips with amplitude 1; Y flips with amplitude i s_i.
            let flip1 = 1 << (n - 1 - i);
            h[(b ^ flip1, b)] += Complex::new(c.hx[i], c.hy[i] * si);
        }
        h[(b, b)] += Complex::new(diag, 0.0);
    }
    h
}

fn dimer_levels(d: &DimerChain) -> Result<Vec<f64>> {
    if d.n > MAX_DIMER_SPINS {
        return Err(Error::Capacity {
            what: "dimerized chain spin count",
            limit: MAX_DIMER_SPINS,
            requested: d.n,
        });
    }
    // Each isolated pair contributes a singlet at -3J or a threefold
    // triplet at +J; the full spectrum is every sum of per-pair picks.
    let mut levels = vec![0.0f64];
    for &j in &d.j {
        let mut next = Vec::with_capacity(levels.len() * 4);
        for &e in &levels {
            next.push(e - 3.0 * j);
            next.extend_from_slice(&[e + j; 3]);
        }
        levels = next;
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(sites: &[usize]) -> Hyperedge {
        Hyperedge::new(sites.to_vec()).unwrap()
    }

    #[test]
    fn hyperedge_rejects_bad_site_lists() {
        assert!(Hyperedge::new(vec![]).is_err());
        assert!(Hyperedge::new(vec![1, 1]).is_err());
        assert!(Hyperedge::new(vec![2, 1]).is_err());
        assert!(Hyperedge::new(vec![0, 3, 7]).is_ok());
    }

    #[test]
    fn hyperedges_enumerate_in_canonical_order() {
        let e3 = hyperedges(3).unwrap();
        let expected: Vec<Hyperedge> = [
            &[0][..],
            &[1],
            &[2],
            &[0, 1],
            &[0, 2],
            &[1, 2],
            &[0, 1, 2],
        ]
        .iter()
        .map(|s| edge(s))
        .collect();
        assert_eq!(e3, expected);
        assert_eq!(hyperedges(4).unwrap().len(), 15);
        assert!(hyperedges(0).is_err());
        assert!(hyperedges(17).is_err());
    }

    #[test]
    fn single_spin_field_gives_twice_the_field() {
        let m = GeneralizedIsing::new(1, [(edge(&[0]), 0.7)]).unwrap();
        let s = ising_spectrum(&m).unwrap();
        assert_eq!(s.levels(), &[0.0, 1.4]);
    }

    #[test]
    fn site_zero_is_the_most_significant_bit() {
        let m = GeneralizedIsing::new(2, [(edge(&[0]), 1.0)]).unwrap();
        let e = ising_energies(&m).unwrap();
        // b = 0b00, 0b01 leave site 0 up; 0b10, 0b11 flip it.
        assert_eq!(e, vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn duplicate_and_out_of_range_couplings_are_rejected() {
        assert!(GeneralizedIsing::new(2, [(edge(&[0]), 1.0), (edge(&[0]), 2.0)]).is_err());
        assert!(GeneralizedIsing::new(2, [(edge(&[2]), 1.0)]).is_err());
        assert!(GeneralizedIsing::new(2, [(edge(&[0]), f64::NAN)]).is_err());
    }

    /// Sign pattern over the 15 canonical edges of n = 4 that opens a
    /// maximal gap: all excited levels coincide at 16 J.
    fn maximal_gap_signs() -> Vec<f64> {
        vec![
            -1.0, -1.0, 1.0, 1.0, // 1-body
            -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, // 2-body
            1.0, 1.0, -1.0, -1.0, // 3-body
            -1.0, // 4-body
        ]
    }

    #[test]
    fn four_spin_sign_pattern_concentrates_the_gap() {
        let j = 0.85;
        let edges = hyperedges(4).unwrap();
        let model =
            GeneralizedIsing::new(4, edges.into_iter().zip(maximal_gap_signs()).map(|(e, s)| (e, s * j)))
                .unwrap();
        let energies = ising_energies(&model).unwrap();
        let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(
            energies.iter().position(|&e| e == min),
            Some(3),
            "the ground configuration for this pattern is index 3"
        );
        let s = ising_spectrum(&model).unwrap();
        assert_eq!(s.levels()[0], 0.0);
        for &e in &s.levels()[1..] {
            assert!((e - 16.0 * j).abs() <= 1e-12 * 16.0 * j);
        }
    }

    #[test]
    fn design_recovers_the_all_equal_excited_target() {
        let target =
            EnergySpectrum::pinned(std::iter::once(0.0).chain([16.0; 15]).collect()).unwrap();
        let design = design_couplings(4, &target).unwrap();
        assert!(design.max_residual <= 1e-9 * 16.0);
        let s = ising_spectrum(&design.model).unwrap();
        for (a, b) in s.levels().iter().zip(target.levels()) {
            assert!((a - b).abs() < 1e-9);
        }
        // The shift restores the stated all-down constraint: realized
        // energies sum to zero.
        let raw = ising_energies(&design.model).unwrap();
        assert!(raw.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn designing_a_flat_target_gives_zero_couplings() {
        let target = EnergySpectrum::pinned(vec![0.0; 16]).unwrap();
        let design = design_couplings(4, &target).unwrap();
        assert_eq!(design.shift, 0.0);
        for (_, j) in design.model.couplings() {
            assert!(j.abs() < 1e-12);
        }
    }

    #[test]
    fn design_validates_target_length_and_capacity() {
        let short = EnergySpectrum::pinned(vec![0.0, 1.0, 2.0]).unwrap();
        assert!(design_couplings(2, &short).is_err());
        let s = EnergySpectrum::pinned(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            design_couplings(11, &s),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn design_matrix_has_full_rank() {
        assert_eq!(rank_check(2).unwrap(), 3);
        assert_eq!(rank_check(4).unwrap(), 15);
    }

    #[test]
    fn diagonal_chain_matches_the_ising_form() {
        let c = XYZChain::new(
            3,
            vec![0.0; 3],
            vec![0.0; 3],
            vec![0.4, -1.1, 0.9],
            vec![0.0; 3],
            vec![0.0; 3],
            vec![0.3, 0.0, -0.7],
        )
        .unwrap();
        assert!(c.is_diagonal());
        let ising = GeneralizedIsing::new(
            3,
            [
                (edge(&[0, 1]), 0.4),
                (edge(&[1, 2]), -1.1),
                (edge(&[0, 2]), 0.9),
                (edge(&[0]), 0.3),
                (edge(&[2]), -0.7),
            ],
        )
        .unwrap();
        let a = chain_spectrum(&SpinModel::Xyz(c)).unwrap();
        let b = ising_spectrum(&ising).unwrap();
        // Accumulation order differs between the per-site and per-edge
        // sums, so agreement is to rounding, not bit-exact.
        for (x, y) in a.levels().iter().zip(b.levels()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn transverse_and_longitudinal_single_fields_are_isospectral() {
        // A field of fixed magnitude gives the same spectrum about any
        // axis; the y case exercises the complex matrix elements.
        let field = 0.67;
        let spectra: Vec<Vec<f64>> = (0..3)
            .map(|axis| {
                let mut hx = vec![0.0; 2];
                let mut hy = vec![0.0; 2];
                let mut hz = vec![0.0; 2];
                [&mut hx, &mut hy, &mut hz][axis][0] = field;
                let c = XYZChain::new(2, vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], hx, hy, hz)
                    .unwrap();
                chain_spectrum(&SpinModel::Xyz(c)).unwrap().levels().to_vec()
            })
            .collect();
        for s in &spectra {
            for (a, b) in s.iter().zip([0.0, 0.0, 2.0 * field, 2.0 * field]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_spectrum_has_zero_trace() {
        // Every term is a product of Pauli operators, all traceless.
        let c = XYZChain::new(
            3,
            vec![0.3, -0.2, 0.5],
            vec![0.1, 0.6, -0.4],
            vec![-0.8, 0.2, 0.7],
            vec![0.25, -0.15, 0.05],
            vec![0.4, -0.3, 0.2],
            vec![-0.6, 0.35, 0.1],
        )
        .unwrap();
        let raw = xyz_levels(&c).unwrap();
        let scale = raw.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        assert!(raw.iter().sum::<f64>().abs() <= 1e-9 * scale);
    }

    #[test]
    fn single_dimer_has_singlet_triplet_structure() {
        let d = DimerChain::new(2, vec![1.3]).unwrap();
        let s = chain_spectrum(&SpinModel::Dimer(d.clone())).unwrap();
        for (a, b) in s.levels().iter().zip([0.0, 5.2, 5.2, 5.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        let dense = chain_spectrum(&SpinModel::Xxx(d.to_xxx())).unwrap();
        for (a, b) in s.levels().iter().zip(dense.levels()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_three_dimer_chain_has_ninefold_first_excited_level() {
        let d = DimerChain::new(6, vec![1.0; 3]).unwrap();
        let s = chain_spectrum(&SpinModel::Dimer(d)).unwrap();
        // Unit couplings keep the level sums exact, so count exactly.
        let gap = s.levels()[1];
        assert_eq!(gap, 4.0);
        assert_eq!(s.levels().iter().filter(|&&e| e == gap).count(), 9);
    }

    #[test]
    fn dimer_chain_validates_shape_and_signs() {
        assert!(DimerChain::new(5, vec![1.0, 1.0]).is_err());
        assert!(DimerChain::new(4, vec![1.0]).is_err());
        assert!(DimerChain::new(4, vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn models_round_trip_through_json() {
        let models = [
            SpinModel::Ising(
                GeneralizedIsing::new(2, [(edge(&[0]), -0.5), (edge(&[0, 1]), 1.25)]).unwrap(),
            ),
            SpinModel::Xyz(
                XYZChain::new(
                    2,
                    vec![0.1; 2],
                    vec![0.2; 2],
                    vec![0.3; 2],
                    vec![0.0; 2],
                    vec![0.4; 2],
                    vec![-0.5; 2],
                )
                .unwrap(),
            ),
            SpinModel::Xxx(
                XXXChain::new(2, vec![1.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.5; 2]).unwrap(),
            ),
            SpinModel::Dimer(DimerChain::new(4, vec![1.0, 2.0]).unwrap()),
        ];
        for model in models {
            let text = serde_json::to_string(&model).unwrap();
            let back: SpinModel = serde_json::from_str(&text).unwrap();
            assert_eq!(back, model);
        }
        let bad = r#"{"model":"dimer","n":4,"j":[1.0,-1.0]}"#;
        assert!(serde_json::from_str::<SpinModel>(bad).is_err());
    }

    #[test]
    fn capacity_limits_are_enforced() {
        let big = XYZChain::new(
            13,
            vec![0.1; 13],
            vec![0.0; 13],
            vec![0.0; 13],
            vec![0.0; 13],
            vec![0.0; 13],
            vec![0.0; 13],
        )
        .unwrap();
        assert!(matches!(
            chain_spectrum(&SpinModel::Xyz(big)),
            Err(Error::Capacity { .. })
        ));
        assert!(matches!(rank_check(11), Err(Error::Capacity { .. })));
    }
}
