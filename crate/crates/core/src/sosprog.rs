//! Sum-of-squares programs and their semidefinite encodings.
//!
//! An identity states that `known + Σ c·action(s_k) + Σ t_l·g_l` is SOS, where
//! the `s_k = χ_kᵀ R_k χ_k` are SOS unknowns, the `t_l` are free scalars and
//! `action` is multiplication by a known polynomial or a Lie derivative along
//! a known field. Each identity gets its own Gram matrix `Q`, and matching
//! coefficients of `χᵀQχ` against the expression gives the trace equalities.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::poly::{lie_derivative, Monomial, PolyError, Polynomial, PolynomialVectorField};
use crate::sdp::{LinearForm, SdpProblem, SdpSolution, SymEntry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error("Gram matrix is {found}x{found}, basis has {expected} monomials")]
    SizeMismatch { expected: usize, found: usize },
    #[error("ill-formed identity '{identity}': {reason}")]
    IllFormed { identity: String, reason: String },
    #[error("program has no identities")]
    EmptyProgram,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot decode a solution with status {0:?}")]
    NotSolved(crate::sdp::SdpStatus),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Ordered monomial vector `χ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GramBasis {
    dim: usize,
    monomials: Vec<Monomial>,
}

impl GramBasis {
    /// Distinct monomials, sorted into graded-lex order.
    pub fn from_monomials(dim: usize, mut monomials: Vec<Monomial>) -> Result<Self, SosError> {
        if let Some(m) = monomials.iter().find(|m| m.dim() != dim) {
            return Err(SosError::DimensionMismatch { expected: dim, found: m.dim() });
        }
        monomials.sort();
        monomials.dedup();
        Ok(GramBasis { dim, monomials })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn min_degree(&self) -> Option<u32> {
        self.monomials.first().map(Monomial::degree)
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.monomials.last().map(Monomial::degree)
    }

    /// `(a, b, χ_a χ_b)` for `a <= b`.
    pub fn products(&self) -> impl Iterator<Item = (usize, usize, Monomial)> + '_ {
        let n = self.monomials.len();
        (0..n).flat_map(move |a| (a..n).map(move |b| (a, b, self.monomials[a].mul(&self.monomials[b]))))
    }
}

fn exponent_vectors(n: usize, d: u32, out: &mut Vec<Vec<u32>>, prefix: &mut Vec<u32>) {
    if prefix.len() + 1 == n {
        prefix.push(d);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=d).rev() {
        prefix.push(e);
        exponent_vectors(n, d - e, out, prefix);
        prefix.pop();
    }
}

/// All monomials in `n` variables with total degree in `[d_min, d_max]`.
pub fn monomial_basis(n: usize, d_min: u32, d_max: u32) -> GramBasis {
    let mut monomials = Vec::new();
    if n == 0 {
        if d_min == 0 {
            monomials.push(Monomial::one(0));
        }
        return GramBasis { dim: 0, monomials };
    }
    for d in d_min..=d_max {
        let mut exps = Vec::new();
        exponent_vectors(n, d, &mut exps, &mut Vec::with_capacity(n));
        monomials.extend(exps.into_iter().map(Monomial::new));
    }
    monomials.sort();
    GramBasis { dim: n, monomials }
}

/// `χᵀ R χ`.
pub fn gram_expand(basis: &GramBasis, r: &DMatrix<f64>) -> Result<Polynomial, SosError> {
    let n = basis.len();
    if r.nrows() != n || r.ncols() != n {
        return Err(SosError::SizeMismatch { expected: n, found: r.nrows().max(r.ncols()) });
    }
    let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
    for (a, b, m) in basis.products() {
        let v = if a == b { r[(a, a)] } else { r[(a, b)] + r[(b, a)] };
        *acc.entry(m).or_insert(0.0) += v;
    }
    Ok(Polynomial::from_terms(basis.dim(), acc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownRole {
    Lyapunov,
    Multiplier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnknownId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScalarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct SosUnknown {
    pub name: String,
    pub basis: GramBasis,
    pub role: UnknownRole,
}

/// Linear operator applied to an SOS unknown inside an identity.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Multiply(Polynomial),
    /// `∇s · f`.
    Lie(PolynomialVectorField),
}

impl Action {
    fn apply(&self, p: &Polynomial) -> Result<Polynomial, PolyError> {
        match self {
            Action::Multiply(g) => Ok(p * g),
            Action::Lie(f) => lie_derivative(p, f),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Action::Multiply(g) => g.dim(),
            Action::Lie(f) => f.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnknownTerm {
    pub unknown: UnknownId,
    pub action: Action,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTerm {
    pub scalar: ScalarId,
    pub poly: Polynomial,
}

/// "`known + Σ unknown terms + Σ scalar terms` is SOS".
#[derive(Debug, Clone, PartialEq)]
pub struct SosIdentity {
    pub name: String,
    pub known: Polynomial,
    pub unknown_terms: Vec<UnknownTerm>,
    pub scalar_terms: Vec<ScalarTerm>,
    /// Gram basis of the expression; derived from the degree range when absent.
    pub basis: Option<GramBasis>,
}

impl SosIdentity {
    pub fn new(name: impl Into<String>, known: Polynomial) -> Self {
        SosIdentity { name: name.into(), known, unknown_terms: Vec::new(), scalar_terms: Vec::new(), basis: None }
    }

    pub fn with_basis(mut self, basis: GramBasis) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn add_unknown(&mut self, unknown: UnknownId, action: Action, coeff: f64) -> &mut Self {
        self.unknown_terms.push(UnknownTerm { unknown, action, coeff });
        self
    }

    pub fn add_scalar(&mut self, scalar: ScalarId, poly: Polynomial) -> &mut Self {
        self.scalar_terms.push(ScalarTerm { scalar, poly });
        self
    }

    pub fn dim(&self) -> usize {
        self.known.dim()
    }
}

/// Linear objective over scalars and traces of unknown Gram matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Objective {
    pub scalars: Vec<(ScalarId, f64)>,
    pub traces: Vec<(UnknownId, f64)>,
}

impl Objective {
    pub fn feasibility() -> Self {
        Objective::default()
    }

    pub fn minimize(scalar: ScalarId) -> Self {
        Objective { scalars: vec![(scalar, 1.0)], traces: Vec::new() }
    }

    pub fn is_feasibility(&self) -> bool {
        self.scalars.is_empty() && self.traces.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosProgram {
    pub dim: usize,
    pub unknowns: Vec<SosUnknown>,
    pub scalars: Vec<String>,
    pub identities: Vec<SosIdentity>,
    pub objective: Objective,
}

impl SosProgram {
    pub fn new(dim: usize) -> Self {
        SosProgram { dim, unknowns: Vec::new(), scalars: Vec::new(), identities: Vec::new(), objective: Objective::default() }
    }

    pub fn add_unknown(&mut self, name: impl Into<String>, basis: GramBasis, role: UnknownRole) -> UnknownId {
        self.unknowns.push(SosUnknown { name: name.into(), basis, role });
        UnknownId(self.unknowns.len() - 1)
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> ScalarId {
        self.scalars.push(name.into());
        ScalarId(self.scalars.len() - 1)
    }

    pub fn add_identity(&mut self, identity: SosIdentity) {
        self.identities.push(identity);
    }

    fn validate(&self) -> Result<(), SosError> {
        let dim_check = |found: usize| {
            if found != self.dim {
                Err(SosError::DimensionMismatch { expected: self.dim, found })
            } else {
                Ok(())
            }
        };
        for u in &self.unknowns {
            dim_check(u.basis.dim())?;
            if u.basis.is_empty() {
                return Err(SosError::IllFormed { identity: u.name.clone(), reason: "unknown has an empty basis".into() });
            }
        }
        for id in &self.identities {
            dim_check(id.dim())?;
            for t in &id.unknown_terms {
                dim_check(t.action.dim())?;
                if t.unknown.0 >= self.unknowns.len() {
                    return Err(SosError::IllFormed { identity: id.name.clone(), reason: "unknown id out of range".into() });
                }
            }
            for t in &id.scalar_terms {
                dim_check(t.poly.dim())?;
                if t.scalar.0 >= self.scalars.len() {
                    return Err(SosError::IllFormed { identity: id.name.clone(), reason: "scalar id out of range".into() });
                }
            }
            if let Some(b) = &id.basis {
                dim_check(b.dim())?;
            }
        }
        Ok(())
    }
}

/// One trace equality: `Σ Q entries - Σ unknown contributions - Σ scalar terms = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedEquation {
    pub monomial: Monomial,
    /// `(a, b, v)` with `a <= b`, in the identity's own Gram matrix.
    pub gram: Vec<(usize, usize, f64)>,
    /// `(unknown, a, b, v)`: coefficient of `R_k` entries (off-diagonal `v` reads `v(R_ab + R_ba)`).
    pub unknowns: Vec<(UnknownId, usize, usize, f64)>,
    pub scalars: Vec<(ScalarId, f64)>,
    /// Coefficient of the monomial in the known part.
    pub rhs: f64,
}

/// Coefficient contributions of every unknown entry, keyed by monomial.
type Contributions = BTreeMap<Monomial, Vec<(UnknownId, usize, usize, f64)>>;

fn unknown_contributions(identity: &SosIdentity, unknowns: &[SosUnknown]) -> Result<Contributions, SosError> {
    let mut out: Contributions = BTreeMap::new();
    for term in &identity.unknown_terms {
        let basis = &unknowns[term.unknown.0].basis;
        let mut cache: BTreeMap<Monomial, Polynomial> = BTreeMap::new();
        for (a, b, m) in basis.products() {
            if !cache.contains_key(&m) {
                let image = term.action.apply(&Polynomial::monomial(m.clone(), 1.0))?;
                cache.insert(m.clone(), image);
            }
            for (mono, c) in cache[&m].terms() {
                out.entry(mono.clone()).or_default().push((term.unknown, a, b, term.coeff * c));
            }
        }
    }
    for list in out.values_mut() {
        list.sort_by_key(|x| (x.0, x.1, x.2));
        let mut merged: Vec<(UnknownId, usize, usize, f64)> = Vec::with_capacity(list.len());
        for &(k, a, b, v) in list.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == k && last.1 == a && last.2 == b => last.3 += v,
                _ => merged.push((k, a, b, v)),
            }
        }
        merged.retain(|e| e.3 != 0.0);
        *list = merged;
    }
    Ok(out)
}

/// Gram basis spanning half the degree range of the expression's possible support.
pub fn identity_basis(identity: &SosIdentity, unknowns: &[SosUnknown]) -> Result<GramBasis, SosError> {
    if let Some(b) = &identity.basis {
        return Ok(b.clone());
    }
    let contrib = unknown_contributions(identity, unknowns)?;
    let degrees = identity
        .known
        .terms()
        .map(|(m, _)| m.degree())
        .chain(contrib.keys().map(Monomial::degree))
        .chain(identity.scalar_terms.iter().flat_map(|t| t.poly.terms().map(|(m, _)| m.degree())));
    let (lo, hi) = degrees.fold((u32::MAX, 0), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if lo == u32::MAX {
        return Err(SosError::IllFormed { identity: identity.name.clone(), reason: "expression is identically zero".into() });
    }
    let (a, b) = (lo.div_ceil(2), hi / 2);
    if a > b {
        return Err(SosError::IllFormed {
            identity: identity.name.clone(),
            reason: format!("no Gram basis fits the degree range [{}, {}]", lo, hi),
        });
    }
    Ok(monomial_basis(identity.dim(), a, b))
}

/// Trace equalities of one identity, in graded-lex monomial order.
pub fn coefficient_matching(
    identity: &SosIdentity,
    unknowns: &[SosUnknown],
    basis: &GramBasis,
) -> Result<Vec<MatchedEquation>, SosError> {
    let contrib = unknown_contributions(identity, unknowns)?;
    let mut rows: BTreeMap<Monomial, MatchedEquation> = BTreeMap::new();
    let blank = |m: &Monomial| MatchedEquation {
        monomial: m.clone(),
        gram: Vec::new(),
        unknowns: Vec::new(),
        scalars: Vec::new(),
        rhs: 0.0,
    };
    for (a, b, m) in basis.products() {
        rows.entry(m.clone()).or_insert_with(|| blank(&m)).gram.push((a, b, 1.0));
    }
    for (m, list) in contrib {
        rows.entry(m.clone()).or_insert_with(|| blank(&m)).unknowns = list;
    }
    for t in &identity.scalar_terms {
        for (m, c) in t.poly.terms() {
            let row = rows.entry(m.clone()).or_insert_with(|| blank(m));
            match row.scalars.iter_mut().find(|s| s.0 == t.scalar) {
                Some(s) => s.1 += c,
                None => row.scalars.push((t.scalar, c)),
            }
        }
    }
    for (m, c) in identity.known.terms() {
        rows.entry(m.clone()).or_insert_with(|| blank(m)).rhs = c;
    }
    let mut out = Vec::with_capacity(rows.len());
    for (_, mut row) in rows {
        row.scalars.retain(|s| s.1 != 0.0);
        if row.gram.is_empty() && row.unknowns.is_empty() && row.scalars.is_empty() {
            if row.rhs != 0.0 {
                return Err(SosError::IllFormed {
                    identity: identity.name.clone(),
                    reason: format!("monomial {} cannot be matched by any unknown", row.monomial),
                });
            }
            continue;
        }
        out.push(row);
    }
    Ok(out)
}

/// Where every unknown lives in the SDP.
#[derive(Debug, Clone)]
pub struct SdpEncoding {
    pub problem: SdpProblem,
    /// Block index of each SOS unknown.
    pub unknown_blocks: Vec<usize>,
    /// Block index and Gram basis of each identity.
    pub identity_blocks: Vec<usize>,
    pub identity_bases: Vec<GramBasis>,
    /// `(identity, monomial)` matched by each constraint row.
    pub rows: Vec<(usize, Monomial)>,
    /// Free-variable index of each scalar.
    pub scalar_columns: Vec<usize>,
}

pub fn encode(program: &SosProgram) -> Result<SdpEncoding, SosError> {
    if program.identities.is_empty() {
        return Err(SosError::EmptyProgram);
    }
    program.validate()?;
    let nu = program.unknowns.len();
    let mut bases = Vec::with_capacity(program.identities.len());
    for id in &program.identities {
        bases.push(identity_basis(id, &program.unknowns)?);
    }
    let mut blocks: Vec<usize> = program.unknowns.iter().map(|u| u.basis.len()).collect();
    blocks.extend(bases.iter().map(GramBasis::len));
    let mut problem = SdpProblem::new(blocks, program.scalars.len());
    let mut rows = Vec::new();
    for (i, id) in program.identities.iter().enumerate() {
        let block = nu + i;
        for eq in coefficient_matching(id, &program.unknowns, &bases[i])? {
            let mut form = LinearForm::default();
            form.entries.extend(eq.gram.iter().map(|&(a, b, v)| SymEntry::new(block, a, b, v)));
            form.entries.extend(eq.unknowns.iter().map(|&(k, a, b, v)| SymEntry::new(k.0, a, b, -v)));
            form.free.extend(eq.scalars.iter().map(|&(s, v)| (s.0, -v)));
            problem.add_constraint(form, eq.rhs);
            rows.push((i, eq.monomial));
        }
    }
    let mut objective = LinearForm::default();
    for &(s, w) in &program.objective.scalars {
        objective.free.push((s.0, w));
    }
    for &(k, w) in &program.objective.traces {
        let n = program.unknowns[k.0].basis.len();
        objective.entries.extend((0..n).map(|a| SymEntry::new(k.0, a, a, w)));
    }
    problem.objective = objective;
    Ok(SdpEncoding {
        problem,
        unknown_blocks: (0..nu).collect(),
        identity_blocks: (nu..nu + program.identities.len()).collect(),
        identity_bases: bases,
        rows,
        scalar_columns: (0..program.scalars.len()).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct DecodedUnknown {
    pub name: String,
    pub gram: DMatrix<f64>,
    pub poly: Polynomial,
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub unknowns: Vec<DecodedUnknown>,
    pub scalars: Vec<f64>,
    pub identity_grams: Vec<DMatrix<f64>>,
    pub identity_polys: Vec<Polynomial>,
}

impl Decoded {
    pub fn unknown(&self, id: UnknownId) -> &DecodedUnknown {
        &self.unknowns[id.0]
    }

    pub fn scalar(&self, id: ScalarId) -> f64 {
        self.scalars[id.0]
    }
}

pub fn decode(program: &SosProgram, encoding: &SdpEncoding, solution: &SdpSolution) -> Result<Decoded, SosError> {
    if !solution.status.is_feasible() {
        return Err(SosError::NotSolved(solution.status));
    }
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    let mut unknowns = Vec::with_capacity(program.unknowns.len());
    for (u, &blk) in program.unknowns.iter().zip(&encoding.unknown_blocks) {
        let gram = sym(&solution.blocks[blk]);
        let poly = gram_expand(&u.basis, &gram)?;
        unknowns.push(DecodedUnknown { name: u.name.clone(), gram, poly });
    }
    let mut identity_grams = Vec::new();
    let mut identity_polys = Vec::new();
    for (basis, &blk) in encoding.identity_bases.iter().zip(&encoding.identity_blocks) {
        let gram = sym(&solution.blocks[blk]);
        identity_polys.push(gram_expand(basis, &gram)?);
        identity_grams.push(gram);
    }
    let scalars = encoding.scalar_columns.iter().map(|&c| solution.free[c]).collect();
    Ok(Decoded { unknowns, scalars, identity_grams, identity_polys })
}

/// The identity's expression with unknown polynomials and scalars substituted.
pub fn substitute(identity: &SosIdentity, polys: &[Polynomial], scalars: &[f64]) -> Result<Polynomial, SosError> {
    let mut e = identity.known.clone();
    for t in &identity.unknown_terms {
        e = &e + &(&t.action.apply(&polys[t.unknown.0])? * t.coeff);
    }
    for t in &identity.scalar_terms {
        e = &e + &(&t.poly * scalars[t.scalar.0]);
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    /// `max |coef|` of `expression - χᵀQχ`.
    pub max_abs: f64,
    /// `1 + max |coef|` of the substituted expression.
    pub scale: f64,
}

impl IdentityResidual {
    pub fn relative(&self) -> f64 {
        self.max_abs / self.scale
    }
}

/// Residual of every identity after substituting the decoded unknowns.
pub fn identity_residuals(program: &SosProgram, decoded: &Decoded) -> Result<Vec<IdentityResidual>, SosError> {
    let polys: Vec<Polynomial> = decoded.unknowns.iter().map(|u| u.poly.clone()).collect();
    program
        .identities
        .iter()
        .zip(&decoded.identity_polys)
        .map(|(id, q)| {
            let e = substitute(id, &polys, &decoded.scalars)?;
            let diff = &e - q;
            Ok(IdentityResidual { max_abs: diff.max_abs_coefficient(), scale: 1.0 + e.max_abs_coefficient() })
        })
        .collect()
}
