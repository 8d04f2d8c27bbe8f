//! Tenor structures, point measures on maturities, bond curves and
//! numeraire-normalized forward curves.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{argument, domain, Error, Result};

/// Absolute tolerance (years) used when matching maturities.
pub const MATURITY_TOL: f64 = 1e-9;

/// Tolerance on `sum_k nu_k * P_hat(T_k) == 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[inline]
pub fn same_maturity(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATURITY_TOL
}

/// Ordered maturities `T_i < ... < T_j` together with an exercise date `T`
/// and a settlement date `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct TenorStructure {
    maturities: Vec<f64>,
    exercise: f64,
    settlement: f64,
}

impl TenorStructure {
    pub fn new(maturities: Vec<f64>, exercise: f64, settlement: f64) -> Result<Self> {
        if maturities.len() < 2 {
            return Err(argument("a tenor structure needs at least two maturities"));
        }
        if !(exercise.is_finite() && exercise >= 0.0) {
            return Err(argument(format!("exercise date {exercise} must be finite and >= 0")));
        }
        if settlement < exercise {
            return Err(argument(format!(
                "settlement {settlement} precedes exercise {exercise}"
            )));
        }
        if maturities[0] < exercise - MATURITY_TOL {
            return Err(argument(format!(
                "first tenor maturity {} precedes exercise {exercise}",
                maturities[0]
            )));
        }
        for w in maturities.windows(2) {
            if w[1] - w[0] <= MATURITY_TOL {
                return Err(argument(format!(
                    "tenor maturities must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { maturities, exercise, settlement })
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn exercise(&self) -> f64 {
        self.exercise
    }

    pub fn settlement(&self) -> f64 {
        self.settlement
    }

    /// `tau_k = T_{k+1} - T_k`.
    pub fn spacings(&self) -> Vec<f64> {
        self.maturities.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `mu = delta_{T_i} - delta_{T_j}`.
    pub fn swap_measure(&self) -> DiscreteMeasure {
        let first = self.maturities[0];
        let last = *self.maturities.last().unwrap();
        DiscreteMeasure::from_sorted_unchecked(alloc::vec![
            Atom::new(first, 1.0),
            Atom::new(last, -1.0)
        ])
    }

    /// `nu = sum_k tau_k delta_{T_{k+1}}`.
    pub fn annuity_measure(&self) -> DiscreteMeasure {
        let atoms = self
            .maturities
            .windows(2)
            .map(|w| Atom::new(w[1], w[1] - w[0]))
            .collect();
        DiscreteMeasure::from_sorted_unchecked(atoms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub maturity: f64,
    pub weight: f64,
}

impl Atom {
    pub const fn new(maturity: f64, weight: f64) -> Self {
        Self { maturity, weight }
    }
}

/// A signed finite sum of Dirac masses on bond maturities.
///
/// Used for payoff baskets (`mu`), numeraires (`nu`) and portfolio holdings
/// (`phi_t`). Atoms are kept sorted by maturity with distinct maturities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    /// Builds a measure from atoms with distinct maturities (any order).
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !a.maturity.is_finite() || !a.weight.is_finite() {
                return Err(argument("measure atoms must be finite"));
            }
        }
        atoms.sort_by(|a, b| a.maturity.total_cmp(&b.maturity));
        for w in atoms.windows(2) {
            if same_maturity(w[0].maturity, w[1].maturity) {
                return Err(argument(format!("duplicate atom at maturity {}", w[0].maturity)));
            }
        }
        Ok(Self { atoms })
    }

    /// Builds a measure, adding the weights of atoms that share a maturity.
    pub fn merged(atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut out = Self::default();
        for a in atoms {
            out.add_atom(a.maturity, a.weight);
        }
        out
    }

    pub(crate) fn from_sorted_unchecked(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn dirac(maturity: f64) -> Self {
        Self { atoms: alloc::vec![Atom::new(maturity, 1.0)] }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(m, w)| Atom::new(m, w)).collect())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn maturities(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.maturity)
    }

    /// Weight charged at `maturity` (zero when it is not an atom).
    pub fn weight_at(&self, maturity: f64) -> f64 {
        self.atoms
            .iter()
            .find(|a| same_maturity(a.maturity, maturity))
            .map_or(0.0, |a| a.weight)
    }

    pub fn contains(&self, maturity: f64) -> bool {
        self.atoms.iter().any(|a| same_maturity(a.maturity, maturity))
    }

    pub fn add_atom(&mut self, maturity: f64, weight: f64) {
        match self.atoms.iter_mut().find(|a| same_maturity(a.maturity, maturity)) {
            Some(a) => a.weight += weight,
            None => {
                let pos = self.atoms.partition_point(|a| a.maturity < maturity);
                self.atoms.insert(pos, Atom::new(maturity, weight));
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| Atom::new(a.maturity, c * a.weight)).collect(),
        }
    }

    /// `self + c * other`, merging shared maturities.
    pub fn plus_scaled(&self, c: f64, other: &Self) -> Self {
        let mut out = self.clone();
        for a in &other.atoms {
            out.add_atom(a.maturity, c * a.weight);
        }
        out
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Checks the numeraire role: nonempty, all weights > 0, support in `[exercise, inf)`.
    pub fn validate_numeraire(&self, exercise: f64) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(argument("numeraire measure is empty"));
        }
        if let Some(a) = self.atoms.iter().find(|a| a.weight <= 0.0) {
            return Err(argument(format!(
                "numeraire weight at {} is {} (must be > 0)",
                a.maturity, a.weight
            )));
        }
        self.validate_support(exercise)
    }

    /// Checks that every atom lies at or beyond `exercise`.
    pub fn validate_support(&self, exercise: f64) -> Result<()> {
        match self.atoms.iter().find(|a| a.maturity < exercise - MATURITY_TOL) {
            Some(a) => Err(argument(format!(
                "atom at {} precedes exercise {exercise}",
                a.maturity
            ))),
            None => Ok(()),
        }
    }
}

/// Read access shared by bond and forward curves.
pub trait Curve {
    fn time(&self) -> f64;
    fn maturities(&self) -> &[f64];
    fn values(&self) -> &[f64];

    fn index_of(&self, maturity: f64) -> Result<usize> {
        find_node(self.maturities(), maturity)
    }

    fn value(&self, maturity: f64) -> Result<f64> {
        Ok(self.values()[self.index_of(maturity)?])
    }
}

pub(crate) fn find_node(maturities: &[f64], maturity: f64) -> Result<usize> {
    let pos = maturities.partition_point(|&m| m < maturity - MATURITY_TOL);
    if pos < maturities.len() && same_maturity(maturities[pos], maturity) {
        Ok(pos)
    } else {
        Err(Error::MissingMaturity(maturity))
    }
}

fn check_nodes(maturities: &[f64], values: &[f64]) -> Result<()> {
    if maturities.len() != values.len() {
        return Err(argument("curve maturities and values differ in length"));
    }
    for w in maturities.windows(2) {
        if w[1] - w[0] <= MATURITY_TOL {
            return Err(argument(format!(
                "curve maturities must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some((m, v)) = maturities.iter().zip(values).find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(domain(format!("bond price at maturity {m} is {v} (must be > 0)")));
    }
    Ok(())
}

/// Zero-coupon bond prices `P_t(y)` at a finite set of maturities.
#[derive(Debug, Clone, PartialEq)]
pub struct BondCurve {
    time: f64,
    maturities: Vec<f64>,
    values: Vec<f64>,
}

impl BondCurve {
    /// Builds a curve from `(maturity, price)` nodes in any order.
    pub fn new(time: f64, mut nodes: Vec<(f64, f64)>) -> Result<Self> {
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (maturities, values): (Vec<f64>, Vec<f64>) = nodes.into_iter().unzip();
        Self::from_parts(time, maturities, values)
    }

    pub fn from_parts(time: f64, maturities: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_nodes(&maturities, &values)?;
        Ok(Self { time, maturities, values })
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.maturities.iter().copied().zip(self.values.iter().copied())
    }
}

impl Curve for BondCurve {
    fn time(&self) -> f64 {
        self.time
    }
    fn maturities(&self) -> &[f64] {
        &self.maturities
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The forward curve `P_hat_t = P_t / P_t(nu)`; it pairs to one against its numeraire.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCurve {
    time: f64,
    numeraire: DiscreteMeasure,
    maturities: Vec<f64>,
    values: Vec<f64>,
}

impl ForwardCurve {
    /// Wraps already-normalized values, checking positivity and normalization.
    pub fn from_parts(
        time: f64,
        numeraire: DiscreteMeasure,
        maturities: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_nodes(&maturities, &values)?;
        let fc = Self { time, numeraire, maturities, values };
        let pairing = measure_pair(&fc, &fc.numeraire)?;
        if (pairing - 1.0).abs() > NORMALIZATION_TOL {
            return Err(domain(format!(
                "forward curve pairs to {pairing} against its numeraire (expected 1)"
            )));
        }
        Ok(fc)
    }

    pub(crate) fn from_parts_unchecked(
        time: f64,
        numeraire: DiscreteMeasure,
        maturities: Vec<f64>,
        values: Vec<f64>,
    ) -> Self {
        Self { time, numeraire, maturities, values }
    }

    pub fn numeraire(&self) -> &DiscreteMeasure {
        &self.numeraire
    }

    /// Divides by `P_hat_t(nu)` again; the identity on a curve normalized by `nu`.
    pub fn renormalize(&self, nu: &DiscreteMeasure) -> Result<Self> {
        let bond = BondCurve {
            time: self.time,
            maturities: self.maturities.clone(),
            values: self.values.clone(),
        };
        forward_normalize(&bond, nu)
    }

    /// Rescales by a positive numeraire value to get bond prices back.
    pub fn to_bond_curve(&self, numeraire_value: f64) -> Result<BondCurve> {
        BondCurve::from_parts(
            self.time,
            self.maturities.clone(),
            self.values.iter().map(|v| v * numeraire_value).collect(),
        )
    }
}

impl Curve for ForwardCurve {
    fn time(&self) -> f64 {
        self.time
    }
    fn maturities(&self) -> &[f64] {
        &self.maturities
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `<m, curve> = sum_k w_k curve(T_k)`.
pub fn measure_pair<C: Curve + ?Sized>(curve: &C, m: &DiscreteMeasure) -> Result<f64> {
    m.atoms()
        .iter()
        .map(|a| curve.value(a.maturity).map(|v| a.weight * v))
        .sum()
}

/// `P_hat_t = P_t / P_t(nu)`.
pub fn forward_normalize(curve: &BondCurve, nu: &DiscreteMeasure) -> Result<ForwardCurve> {
    let numeraire = measure_pair(curve, nu)?;
    if !(numeraire > 0.0) {
        return Err(domain(format!("numeraire value {numeraire} must be > 0")));
    }
    Ok(ForwardCurve {
        time: curve.time,
        numeraire: nu.clone(),
        maturities: curve.maturities.clone(),
        values: curve.values.iter().map(|v| v / numeraire).collect(),
    })
}

/// Simple forward rate `(P(T) - P(S)) / ((S - T) P(S))` over `[T, S]`.
pub fn libor_rate<C: Curve + ?Sized>(curve: &C, start: f64, end: f64) -> Result<f64> {
    if !(start < end) {
        return Err(argument(format!("LIBOR period start {start} must precede end {end}")));
    }
    let p_start = curve.value(start)?;
    let p_end = curve.value(end)?;
    Ok((p_start - p_end) / ((end - start) * p_end))
}

/// `(P(T_i) - P(T_j)) / sum_k tau_k P(T_{k+1})`.
pub fn swap_rate<C: Curve + ?Sized>(curve: &C, tenor: &TenorStructure) -> Result<f64> {
    let annuity = measure_pair(curve, &tenor.annuity_measure())?;
    if !(annuity > 0.0) {
        return Err(domain(format!("annuity {annuity} must be > 0")));
    }
    Ok(measure_pair(curve, &tenor.swap_measure())? / annuity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn curve(nodes: &[(f64, f64)]) -> BondCurve {
        BondCurve::new(0.0, nodes.to_vec()).unwrap()
    }

    #[test]
    fn pairing_linear_combination() {
        let c = curve(&[(1.5, 0.96), (2.0, 0.93)]);
        let m = DiscreteMeasure::from_pairs(&[(1.5, 1.0), (2.0, -1.0)]).unwrap();
        assert!((measure_pair(&c, &m).unwrap() - 0.03).abs() < 1e-15);
        let zero = DiscreteMeasure::from_pairs(&[(1.5, 0.0), (2.0, 0.0)]).unwrap();
        assert_eq!(measure_pair(&c, &zero).unwrap(), 0.0);
    }

    #[test]
    fn pairing_missing_maturity_names_it() {
        let c = curve(&[(1.0, 0.97)]);
        let err = measure_pair(&c, &DiscreteMeasure::dirac(3.0)).unwrap_err();
        assert_eq!(err, Error::MissingMaturity(3.0));
    }

    #[test]
    fn maturity_matching_is_tolerant() {
        let c = curve(&[(1.0, 0.97), (2.0, 0.94)]);
        assert_eq!(c.value(2.0 + 5e-10).unwrap(), 0.94);
        assert!(c.value(2.0 + 5e-9).is_err());
    }

    #[test]
    fn normalization_examples() {
        let c = curve(&[(1.0, 0.97), (2.0, 0.94)]);
        let nu = DiscreteMeasure::from_pairs(&[(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let f = forward_normalize(&c, &nu).unwrap();
        assert!((f.value(1.0).unwrap() - 0.97 / 0.955).abs() < 1e-15);
        assert!((f.value(1.0).unwrap() - 1.015_706_8).abs() < 1e-7);
        assert!((f.value(2.0).unwrap() - 0.984_293_2).abs() < 1e-7);
        assert!((measure_pair(&f, &nu).unwrap() - 1.0).abs() < 1e-15);

        let single = forward_normalize(&c, &DiscreteMeasure::dirac(1.0)).unwrap();
        assert_eq!(single.value(1.0).unwrap(), 1.0);
        assert!((single.value(2.0).unwrap() - 0.94 / 0.97).abs() < 1e-15);

        let again = f.renormalize(&nu).unwrap();
        for (a, b) in again.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn nonpositive_numeraire_is_domain_error() {
        let c = curve(&[(1.0, 0.97), (2.0, 0.94)]);
        let nu = DiscreteMeasure::from_pairs(&[(1.0, 1.0), (2.0, -2.0)]).unwrap();
        assert!(matches!(forward_normalize(&c, &nu), Err(Error::Domain(_))));
    }

    #[test]
    fn libor_examples() {
        let c = curve(&[(1.0, 0.98), (1.5, 0.94)]);
        assert!((libor_rate(&c, 1.0, 1.5).unwrap() - 0.085_106_38).abs() < 1e-8);
        let flat = curve(&[(1.0, 0.95), (1.5, 0.95)]);
        assert_eq!(libor_rate(&flat, 1.0, 1.5).unwrap(), 0.0);
        assert!(matches!(libor_rate(&c, 1.5, 1.0), Err(Error::Argument(_))));
        assert!(matches!(libor_rate(&c, 1.0, 1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn caplet_payoff_identity() {
        // (S-T)(L - kappa)^+ == (1/P_T(S) - (1 + kappa (S-T)))^+ on a curve seen at T.
        for &(ps, kappa) in &[(0.97, 0.02), (0.99, 0.05), (0.95, 0.01), (0.985, 0.03)] {
            let c = BondCurve::new(1.0, vec![(1.0, 1.0), (1.5, ps)]).unwrap();
            let l = libor_rate(&c, 1.0, 1.5).unwrap();
            let lhs = (0.5 * (l - kappa)).max(0.0);
            let rhs = (1.0 / ps - (1.0 + kappa * 0.5)).max(0.0);
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn swap_rate_examples() {
        let c = curve(&[(1.0, 0.97), (1.5, 0.955), (2.0, 0.94)]);
        let tenor = TenorStructure::new(vec![1.0, 1.5, 2.0], 1.0, 1.0).unwrap();
        let s = swap_rate(&c, &tenor).unwrap();
        assert!((s - 0.03 / 0.9475).abs() < 1e-15);
        assert!((s - 0.031_662_3).abs() < 1e-7);
        let by_pairs = measure_pair(&c, &tenor.swap_measure()).unwrap()
            / measure_pair(&c, &tenor.annuity_measure()).unwrap();
        assert_eq!(s, by_pairs);

        let flat = curve(&[(1.0, 0.9), (1.5, 0.9), (2.0, 0.9)]);
        assert_eq!(swap_rate(&flat, &tenor).unwrap(), 0.0);

        let single = TenorStructure::new(vec![1.0, 1.5], 1.0, 1.0).unwrap();
        let s1 = swap_rate(&c, &single).unwrap();
        assert!((s1 - libor_rate(&c, 1.0, 1.5).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn tenor_invariants() {
        assert!(TenorStructure::new(vec![1.0, 2.0, 1.5], 1.0, 1.0).is_err());
        assert!(TenorStructure::new(vec![0.5, 1.0], 1.0, 1.0).is_err());
        assert!(TenorStructure::new(vec![1.0, 2.0], 1.0, 0.5).is_err());
        let t = TenorStructure::new(vec![1.0, 1.5, 2.5], 1.0, 1.0).unwrap();
        assert_eq!(t.spacings(), vec![0.5, 1.0]);
        assert_eq!(t.annuity_measure().weight_at(2.5), 1.0);
    }

    #[test]
    fn numeraire_role_checks() {
        let nu = DiscreteMeasure::from_pairs(&[(1.0, 0.5), (2.0, -0.1)]).unwrap();
        assert!(nu.validate_numeraire(1.0).is_err());
        let nu = DiscreteMeasure::from_pairs(&[(0.5, 0.5)]).unwrap();
        assert!(nu.validate_numeraire(1.0).is_err());
        assert!(DiscreteMeasure::from_pairs(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }
}
