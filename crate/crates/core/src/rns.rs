//! Residue number system over word-sized NTT primes.
//!
//! A coefficient modulo `Q = q_1·…·q_Nq` is carried as its residues modulo
//! each `q_i`; products are computed channel by channel and recombined with
//! the Chinese remainder theorem.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::modarith::{find_ntt_prime, Modulus};
use crate::ntt::{polymul_ntt, Polynomial};

/// CRT weight for one channel: `Q/q_i` and its inverse modulo `q_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrtWeight {
    pub cofactor: BigUint,
    pub cofactor_inv: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnsBasis {
    moduli: Vec<Modulus>,
    big_q: BigUint,
    crt_weights: Vec<CrtWeight>,
}

impl RnsBasis {
    /// A basis over distinct primes. No transform-length condition is imposed.
    pub fn new(moduli: Vec<Modulus>) -> Result<Self> {
        if moduli.is_empty() {
            return Err(Error::InvalidBasis("no moduli".into()));
        }
        let mut qs: Vec<u64> = moduli.iter().map(Modulus::q).collect();
        qs.sort_unstable();
        if qs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidBasis("moduli are not distinct".into()));
        }
        let big_q = moduli
            .iter()
            .fold(BigUint::from(1u32), |acc, m| acc * m.q());
        let crt_weights = moduli
            .iter()
            .map(|m| {
                let cofactor = &big_q / m.q();
                let residue = (&cofactor % m.q()).to_u64().unwrap_or_default();
                CrtWeight {
                    cofactor,
                    cofactor_inv: m.inv(residue),
                }
            })
            .collect();
        Ok(RnsBasis {
            moduli,
            big_q,
            crt_weights,
        })
    }

    /// A basis for length-`n` negacyclic products from explicit primes.
    pub fn for_ntt(primes: &[u64], n: usize) -> Result<Self> {
        let moduli = primes
            .iter()
            .map(|&q| Modulus::for_ntt(q, n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(moduli)
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.moduli
    }

    pub fn primes(&self) -> Vec<u64> {
        self.moduli.iter().map(Modulus::q).collect()
    }

    pub fn big_q(&self) -> &BigUint {
        &self.big_q
    }

    pub fn crt_weights(&self) -> &[CrtWeight] {
        &self.crt_weights
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    /// Bit length of `Q`, i.e. `ceil(log2 Q)` for non-power-of-two `Q`.
    pub fn bits(&self) -> u64 {
        self.big_q.bits()
    }
}

/// Deterministic prime chain `find_ntt_prime(word_bits, n, 0..n_q)`.
pub fn gen_basis(word_bits: u32, n_q: usize, n: usize) -> Result<RnsBasis> {
    if n_q == 0 {
        return Err(Error::InvalidBasis("n_q must be at least 1".into()));
    }
    let primes = (0..n_q)
        .map(|i| find_ntt_prime(word_bits, n, i))
        .collect::<Result<Vec<_>>>()?;
    RnsBasis::for_ntt(&primes, n)
}

/// One polynomial per basis modulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnsPolynomial {
    residues: Vec<Polynomial>,
}

impl RnsPolynomial {
    pub fn new(residues: Vec<Polynomial>) -> Result<Self> {
        let first = residues
            .first()
            .ok_or_else(|| Error::InvalidBasis("no residue polynomials".into()))?;
        if let Some(bad) = residues.iter().find(|p| p.len() != first.len()) {
            return Err(Error::LengthMismatch {
                expected: first.len(),
                got: bad.len(),
            });
        }
        Ok(RnsPolynomial { residues })
    }

    /// A single-modulus polynomial viewed as a one-channel RNS value.
    pub fn single(poly: Polynomial) -> Self {
        RnsPolynomial {
            residues: vec![poly],
        }
    }

    pub fn residues(&self) -> &[Polynomial] {
        &self.residues
    }

    pub fn channels(&self) -> usize {
        self.residues.len()
    }

    /// Coefficient count `N`.
    pub fn degree(&self) -> usize {
        self.residues[0].len()
    }

    fn check_basis(&self, basis: &RnsBasis) -> Result<()> {
        if self.residues.len() != basis.len() {
            return Err(Error::InvalidBasis(format!(
                "{} residue channels for a {}-modulus basis",
                self.residues.len(),
                basis.len()
            )));
        }
        for (p, m) in self.residues.iter().zip(basis.moduli()) {
            if p.modulus().q() != m.q() {
                return Err(Error::ModulusMismatch(p.modulus().q(), m.q()));
            }
        }
        Ok(())
    }
}

pub fn decompose(coeffs: &[BigUint], basis: &RnsBasis) -> Result<RnsPolynomial> {
    if let Some(index) = coeffs.iter().position(|c| c >= basis.big_q()) {
        return Err(Error::CoefficientOutOfRange { index });
    }
    let residues = basis
        .moduli()
        .iter()
        .map(|m| {
            let channel = coeffs
                .iter()
                .map(|c| (c % m.q()).to_u64().unwrap_or_default())
                .collect();
            Polynomial::new(channel, m.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    RnsPolynomial::new(residues)
}

/// Gauss CRT: `x = Σ x_i·(Q/q_i)·[(Q/q_i)^-1 mod q_i] mod Q`.
pub fn reconstruct(poly: &RnsPolynomial, basis: &RnsBasis) -> Result<Vec<BigUint>> {
    poly.check_basis(basis)?;
    let n = poly.degree();
    let mut out = vec![BigUint::zero(); n];
    for ((channel, modulus), weight) in poly
        .residues
        .iter()
        .zip(basis.moduli())
        .zip(basis.crt_weights())
    {
        for (slot, &x) in out.iter_mut().zip(channel.coeffs()) {
            let scaled = modulus.mul_soft(x, weight.cofactor_inv);
            *slot += &weight.cofactor * scaled;
        }
    }
    for slot in &mut out {
        *slot %= basis.big_q();
    }
    Ok(out)
}

/// Channel-wise negacyclic product.
pub fn rns_polymul(a: &RnsPolynomial, b: &RnsPolynomial, basis: &RnsBasis) -> Result<RnsPolynomial> {
    a.check_basis(basis)?;
    b.check_basis(basis)?;
    let residues = a
        .residues
        .iter()
        .zip(&b.residues)
        .map(|(x, y)| polymul_ntt(x, y))
        .collect::<Result<Vec<_>>>()?;
    RnsPolynomial::new(residues)
}
