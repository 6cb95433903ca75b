//! Reference negacyclic NTT over `Z_q[x]/(x^N + 1)`.
//!
//! The forward transform is a Cooley-Tukey pass taking natural-order
//! coefficients to bit-reversed evaluations; the inverse is a
//! Gentleman-Sande pass going back. Neither performs a permutation pass.
//! The inverse halves both butterfly outputs in every stage, which replaces
//! the final scaling by `N^-1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modarith::Modulus;

/// A ring element given by its `N` coefficients, each below `q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<u64>,
    modulus: Modulus,
}

impl Polynomial {
    pub fn new(coeffs: Vec<u64>, modulus: Modulus) -> Result<Self> {
        check_degree(coeffs.len())?;
        if let Some(&value) = coeffs.iter().find(|&&c| c >= modulus.q()) {
            return Err(Error::OperandOutOfRange {
                value,
                q: modulus.q(),
            });
        }
        Ok(Polynomial { coeffs, modulus })
    }

    pub fn zero(n: usize, modulus: Modulus) -> Result<Self> {
        Self::new(vec![0; n], modulus)
    }

    /// The monomial `x^power`.
    pub fn monomial(n: usize, power: usize, modulus: Modulus) -> Result<Self> {
        if power >= n {
            return Err(Error::IndexOutOfRange {
                index: power,
                limit: n,
            });
        }
        let mut coeffs = vec![0; n];
        coeffs[power] = 1;
        Self::new(coeffs, modulus)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<u64> {
        self.coeffs
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    fn check_compatible(&self, other: &Polynomial) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        if self.modulus.q() != other.modulus.q() {
            return Err(Error::ModulusMismatch(self.modulus.q(), other.modulus.q()));
        }
        Ok(())
    }
}

/// Text form: a header line `N q` followed by one decimal coefficient per line.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.len(), self.modulus.q())?;
        for c in &self.coeffs {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Polynomial {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing `N q` header".into()))?;
        let mut fields = header.split_whitespace();
        let parse_field = |v: Option<&str>, what: &str| -> Result<u64> {
            v.ok_or_else(|| Error::Parse(format!("header lacks {what}")))?
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("bad {what} in header: {e}")))
        };
        let n = parse_field(fields.next(), "N")? as usize;
        let q = parse_field(fields.next(), "q")?;
        if fields.next().is_some() {
            return Err(Error::Parse("header has more than two fields".into()));
        }
        let coeffs = lines
            .map(|l| {
                l.parse::<u64>()
                    .map_err(|e| Error::Parse(format!("bad coefficient `{l}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if coeffs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: coeffs.len(),
            });
        }
        Polynomial::new(coeffs, Modulus::new(q)?)
    }
}

fn check_degree(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

pub(crate) fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Twiddle factors for one `(q, N)` pair.
///
/// `forward[i] = psi^bitrev(i)` and `inverse[i] = psi^-bitrev(i)`, where `psi`
/// is a primitive `2N`-th root of unity. Entry `0` is unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwiddleTable {
    pub forward: Vec<u64>,
    pub inverse: Vec<u64>,
    pub psi: u64,
    pub psi_inv: u64,
    pub modulus: Modulus,
}

impl TwiddleTable {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

/// Index into a [`TwiddleTable`] for the butterfly whose lower operand is
/// `lower` in the stage pairing elements `gap` apart.
///
/// The same index serves the forward and the inverse table.
#[inline]
pub fn twiddle_index(n: usize, gap: usize, lower: usize) -> usize {
    n / (2 * gap) + lower / (2 * gap)
}

pub fn gen_twiddles(modulus: &Modulus, n: usize) -> Result<TwiddleTable> {
    check_degree(n)?;
    let q = modulus.q();
    let two_n = 2 * n as u64;
    if (q - 1) % two_n != 0 {
        return Err(Error::NotNttFriendly { q, two_n });
    }
    let g = modulus
        .primitive_root()
        .ok_or(Error::MissingPrimitiveRoot(q))?;
    let psi = modulus.pow(g, (q - 1) / two_n);
    let psi_inv = modulus.inv(psi);

    let bits = n.trailing_zeros();
    let mut powers = vec![1u64; n];
    let mut inv_powers = vec![1u64; n];
    for i in 1..n {
        powers[i] = modulus.mul_soft(powers[i - 1], psi);
        inv_powers[i] = modulus.mul_soft(inv_powers[i - 1], psi_inv);
    }
    let forward = (0..n).map(|i| powers[bit_reverse(i, bits)]).collect();
    let inverse = (0..n).map(|i| inv_powers[bit_reverse(i, bits)]).collect();

    Ok(TwiddleTable {
        forward,
        inverse,
        psi,
        psi_inv,
        modulus: modulus.clone(),
    })
}

/// Cooley-Tukey butterfly: `(a + b·w, a - b·w)`.
#[inline]
pub fn butterfly_ct(a: u64, b: u64, w: u64, modulus: &Modulus) -> (u64, u64) {
    let bw = modulus.mul_hw(b, w);
    (modulus.add(a, bw), modulus.sub(a, bw))
}

/// Gentleman-Sande butterfly with halving: `((a + b)/2, w·(a - b)/2)`.
#[inline]
pub fn butterfly_gs(a: u64, b: u64, w: u64, modulus: &Modulus) -> (u64, u64) {
    let sum = modulus.half(modulus.add(a, b));
    let diff = modulus.half(modulus.sub(a, b));
    (sum, modulus.mul_hw(diff, w))
}

/// Pair distances of the forward stages, in execution order (`N/2, ..., 1`).
pub fn forward_gaps(n: usize) -> impl Iterator<Item = usize> {
    let stages = n.trailing_zeros();
    (0..stages).map(move |s| n >> (s + 1))
}

/// Pair distances of the inverse stages, in execution order (`1, ..., N/2`).
pub fn inverse_gaps(n: usize) -> impl Iterator<Item = usize> {
    let stages = n.trailing_zeros();
    (0..stages).map(|s| 1usize << s)
}

/// One butterfly of a reference transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ButterflyStep {
    pub lower: usize,
    pub upper: usize,
    pub twiddle: usize,
}

/// All butterflies of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTrace {
    pub gap: usize,
    pub butterflies: Vec<ButterflyStep>,
}

fn stage_butterflies(n: usize, gap: usize) -> impl Iterator<Item = ButterflyStep> {
    (0..n)
        .filter(move |j| (j / gap) % 2 == 0)
        .map(move |lower| ButterflyStep {
            lower,
            upper: lower + gap,
            twiddle: twiddle_index(n, gap, lower),
        })
}

fn check_table(len: usize, tw: &TwiddleTable) -> Result<()> {
    if len != tw.len() {
        return Err(Error::LengthMismatch {
            expected: tw.len(),
            got: len,
        });
    }
    Ok(())
}

/// Forward transform in place: natural order in, bit-reversed out.
pub fn ntt_ct_in_place(values: &mut [u64], tw: &TwiddleTable) -> Result<()> {
    check_table(values.len(), tw)?;
    let n = values.len();
    let md = &tw.modulus;
    for gap in forward_gaps(n) {
        for bf in stage_butterflies(n, gap) {
            let (x, y) = butterfly_ct(
                values[bf.lower],
                values[bf.upper],
                tw.forward[bf.twiddle],
                md,
            );
            values[bf.lower] = x;
            values[bf.upper] = y;
        }
    }
    Ok(())
}

/// Inverse transform in place: bit-reversed in, natural order out.
pub fn intt_gs_in_place(values: &mut [u64], tw: &TwiddleTable) -> Result<()> {
    check_table(values.len(), tw)?;
    let n = values.len();
    let md = &tw.modulus;
    for gap in inverse_gaps(n) {
        for bf in stage_butterflies(n, gap) {
            let (x, y) = butterfly_gs(
                values[bf.lower],
                values[bf.upper],
                tw.inverse[bf.twiddle],
                md,
            );
            values[bf.lower] = x;
            values[bf.upper] = y;
        }
    }
    Ok(())
}

pub fn ntt_ct(poly: &Polynomial, tw: &TwiddleTable) -> Result<Polynomial> {
    let mut out = poly.clone();
    ntt_ct_in_place(&mut out.coeffs, tw)?;
    Ok(out)
}

pub fn intt_gs(evals: &Polynomial, tw: &TwiddleTable) -> Result<Polynomial> {
    let mut out = evals.clone();
    intt_gs_in_place(&mut out.coeffs, tw)?;
    Ok(out)
}

/// The sequence of stages `ntt_ct` (or `intt_gs` when `inverse`) executes.
pub fn transform_trace(n: usize, inverse: bool) -> Result<Vec<StageTrace>> {
    check_degree(n)?;
    let gaps: Vec<usize> = if inverse {
        inverse_gaps(n).collect()
    } else {
        forward_gaps(n).collect()
    };
    Ok(gaps
        .into_iter()
        .map(|gap| StageTrace {
            gap,
            butterflies: stage_butterflies(n, gap).collect(),
        })
        .collect())
}

pub fn pointwise_mul(a: &Polynomial, b: &Polynomial) -> Result<Polynomial> {
    a.check_compatible(b)?;
    let md = &a.modulus;
    let coeffs = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(&x, &y)| md.mul_hw(x, y))
        .collect();
    Ok(Polynomial {
        coeffs,
        modulus: md.clone(),
    })
}

/// `a·b mod (x^N + 1)` through forward transforms, a pointwise product and
/// the inverse transform.
pub fn polymul_ntt(a: &Polynomial, b: &Polynomial) -> Result<Polynomial> {
    a.check_compatible(b)?;
    let tw = gen_twiddles(&a.modulus, a.len())?;
    polymul_ntt_with(a, b, &tw)
}

pub fn polymul_ntt_with(a: &Polynomial, b: &Polynomial, tw: &TwiddleTable) -> Result<Polynomial> {
    a.check_compatible(b)?;
    if !a.modulus.supports_hw() {
        return Err(Error::StepWidthTooNarrow {
            k: a.modulus.k(),
            width: a.modulus.step_width().bits(),
        });
    }
    let fa = ntt_ct(a, tw)?;
    let fb = ntt_ct(b, tw)?;
    intt_gs(&pointwise_mul(&fa, &fb)?, tw)
}

/// Quadratic-time negacyclic product; the independent oracle for the transforms.
pub fn schoolbook_negacyclic(a: &Polynomial, b: &Polynomial) -> Result<Polynomial> {
    a.check_compatible(b)?;
    let n = a.len();
    let q = a.modulus.q() as u128;
    // Below 2^32 every product fits in 64 bits, so whole rows can be summed
    // before reducing. Wider moduli reduce each product.
    let lazy = q < 1 << 32;
    let (mut pos, mut neg) = (vec![0u128; n], vec![0u128; n]);
    for (i, &x) in a.coeffs.iter().enumerate() {
        for (j, &y) in b.coeffs.iter().enumerate() {
            let mut p = x as u128 * y as u128;
            if !lazy {
                p %= q;
            }
            if i + j < n {
                pos[i + j] += p;
            } else {
                neg[i + j - n] += p;
            }
        }
    }
    let acc: Vec<u128> = pos
        .into_iter()
        .zip(neg)
        .map(|(p, m)| (p % q + q - m % q) % q)
        .collect();
    Ok(Polynomial {
        coeffs: acc.into_iter().map(|c| c as u64).collect(),
        modulus: a.modulus.clone(),
    })
}
