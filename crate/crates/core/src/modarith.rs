//! Word-sized modular arithmetic.
//!
//! Two Barrett multipliers live here. The software form reduces the full
//! product `a·b·m >> 2k` in one go. The hardware form pre-shifts `a·b` by
//! `k-1` bits before multiplying by `m`, builds every product from four
//! half-width partial products ([`step_multiply`]) and finishes with a
//! two-step subtraction ladder (`-2q`, `-q`). Its intermediate remainder is
//! either the software remainder or that plus `q`, so it is always below `3q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split width `W` of the step multiplier.
///
/// Operands are cut into `MSBs = [W:W/2]` and `LSBs = [W/2-1:0]`, so an
/// operand may carry up to `W + 1` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum StepWidth {
    W16,
    #[default]
    W32,
}

impl StepWidth {
    pub const fn bits(self) -> u32 {
        match self {
            StepWidth::W16 => 16,
            StepWidth::W32 => 32,
        }
    }

    /// Exclusive upper bound on step multiplier operands (`2^(W+1)`).
    pub const fn operand_limit(self) -> u64 {
        1u64 << (self.bits() + 1)
    }
}

/// A double-word product `hi·2^W + lo` with `lo < 2^W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordProduct {
    pub lo: u64,
    pub hi: u64,
    pub width: StepWidth,
}

impl WordProduct {
    pub fn value(&self) -> u128 {
        ((self.hi as u128) << self.width.bits()) | self.lo as u128
    }
}

/// Multiplies two words by splitting each at `W/2` and recombining the four
/// partial products with shifts and adds.
///
/// Operands must be below `2^(W+1)`; the top segment is `W/2 + 1` bits wide.
pub fn step_multiply(a: u64, b: u64, width: StepWidth) -> WordProduct {
    let w = width.bits();
    let half = w / 2;
    debug_assert!(a < width.operand_limit() && b < width.operand_limit());

    let half_mask = (1u64 << half) - 1;
    let word_mask = (1u64 << w) - 1;
    let (a_hi, a_lo) = (a >> half, a & half_mask);
    let (b_hi, b_lo) = (b >> half, b & half_mask);

    let ll = a_lo * b_lo;
    let mid = a_hi * b_lo + a_lo * b_hi;
    let hh = a_hi * b_hi;

    let low_sum = ll + ((mid & half_mask) << half);
    WordProduct {
        lo: low_sum & word_mask,
        hi: hh + (mid >> half) + (low_sum >> w),
        width,
    }
}

/// A prime modulus with its Barrett constants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modulus {
    q: u64,
    k: u32,
    m: u64,
    root: Option<u64>,
    two_n: Option<u64>,
    step: StepWidth,
}

/// Intermediate values of one Barrett multiplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarrettTrace {
    pub t1: u128,
    pub t2: u128,
    pub t3: u128,
    pub t4: u128,
    pub z: u64,
}

impl Modulus {
    /// Precomputes `k = ceil(log2 q)` and `m = floor(2^2k / q)`.
    pub fn new(q: u64) -> Result<Self> {
        if !(3..1u64 << 63).contains(&q) {
            return Err(Error::ModulusOutOfRange(q));
        }
        if !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        let k = ceil_log2(q);
        let m = ((1u128 << (2 * k)) / q as u128) as u64;
        Ok(Modulus {
            q,
            k,
            m,
            root: None,
            two_n: None,
            step: StepWidth::default(),
        })
    }

    /// A modulus prepared for length-`n` negacyclic transforms: checks
    /// `q ≡ 1 (mod 2n)` and attaches the smallest primitive root.
    pub fn for_ntt(q: u64, n: usize) -> Result<Self> {
        let mut modulus = Self::new(q)?;
        let two_n = 2 * n as u64;
        if (q - 1) % two_n != 0 {
            return Err(Error::NotNttFriendly { q, two_n });
        }
        modulus.two_n = Some(two_n);
        modulus.root = Some(find_primitive_root(q)?);
        Ok(modulus)
    }

    /// Selects the split width used by [`Modulus::mul_hw`].
    pub fn with_step_width(mut self, step: StepWidth) -> Result<Self> {
        if self.k > step.bits() {
            return Err(Error::StepWidthTooNarrow {
                k: self.k,
                width: step.bits(),
            });
        }
        self.step = step;
        Ok(self)
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn primitive_root(&self) -> Option<u64> {
        self.root
    }

    pub fn two_n(&self) -> Option<u64> {
        self.two_n
    }

    pub fn step_width(&self) -> StepWidth {
        self.step
    }

    /// Whether the hardware multiplier can run at the configured width.
    pub fn supports_hw(&self) -> bool {
        self.k <= self.step.bits()
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    /// Software Barrett product; operands must already be reduced.
    #[inline]
    pub fn mul_soft(&self, a: u64, b: u64) -> u64 {
        self.trace_soft(a, b).z
    }

    /// Hardware-friendly Barrett product; operands must already be reduced.
    #[inline]
    pub fn mul_hw(&self, a: u64, b: u64) -> u64 {
        self.trace_hw(a, b).z
    }

    /// `x / 2 mod q` using a shift and an add.
    #[inline]
    pub fn half(&self, x: u64) -> u64 {
        debug_assert!(x < self.q);
        if x & 1 == 0 {
            x >> 1
        } else {
            (x >> 1) + (self.q + 1) / 2
        }
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.q;
        let mut b = base % self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul_soft(acc, b);
            }
            b = self.mul_soft(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat.
    pub fn inv(&self, a: u64) -> u64 {
        self.pow(a, self.q - 2)
    }

    fn trace_soft(&self, a: u64, b: u64) -> BarrettTrace {
        debug_assert!(a < self.q && b < self.q);
        let t1 = a as u128 * b as u128;
        let t2 = mul_shr(t1, self.m, 2 * self.k);
        let t3 = t2 * self.q as u128;
        let t4 = t1 - t3;
        debug_assert!(t4 < 2 * self.q as u128);
        let z = if t4 >= self.q as u128 {
            t4 - self.q as u128
        } else {
            t4
        };
        BarrettTrace {
            t1,
            t2,
            t3,
            t4,
            z: z as u64,
        }
    }

    fn trace_hw(&self, a: u64, b: u64) -> BarrettTrace {
        debug_assert!(a < self.q && b < self.q);
        debug_assert!(self.supports_hw());
        let (k, q, width) = (self.k, self.q, self.step);

        let t1 = step_multiply(a, b, width).value();
        let t1_high = (t1 >> (k - 1)) as u64;
        let t2 = step_multiply(t1_high, self.m, width).value() >> (k + 1);
        let t3 = step_multiply(t2 as u64, q, width).value();
        let t4 = t1 - t3;
        debug_assert!(t4 < 3 * q as u128);

        let q = q as u128;
        let z = if t4 >= 2 * q {
            t4 - 2 * q
        } else if t4 >= q {
            t4 - q
        } else {
            t4
        };
        BarrettTrace {
            t1,
            t2,
            t3,
            t4,
            z: z as u64,
        }
    }

    fn check_operand(&self, value: u64) -> Result<()> {
        if value >= self.q {
            Err(Error::OperandOutOfRange { value, q: self.q })
        } else {
            Ok(())
        }
    }
}

/// Builds a [`Modulus`] (`barrett_precompute`).
pub fn barrett_precompute(q: u64) -> Result<Modulus> {
    Modulus::new(q)
}

pub fn barrett_mul_soft(a: u64, b: u64, modulus: &Modulus) -> Result<u64> {
    Ok(barrett_mul_soft_traced(a, b, modulus)?.z)
}

pub fn barrett_mul_soft_traced(a: u64, b: u64, modulus: &Modulus) -> Result<BarrettTrace> {
    modulus.check_operand(a)?;
    modulus.check_operand(b)?;
    Ok(modulus.trace_soft(a, b))
}

pub fn barrett_mul_hw(a: u64, b: u64, modulus: &Modulus) -> Result<u64> {
    Ok(barrett_mul_hw_traced(a, b, modulus)?.z)
}

/// Hardware Barrett multiplication returning every intermediate.
pub fn barrett_mul_hw_traced(a: u64, b: u64, modulus: &Modulus) -> Result<BarrettTrace> {
    modulus.check_operand(a)?;
    modulus.check_operand(b)?;
    if !modulus.supports_hw() {
        return Err(Error::StepWidthTooNarrow {
            k: modulus.k,
            width: modulus.step.bits(),
        });
    }
    Ok(modulus.trace_hw(a, b))
}

/// `x / 2 mod q` for odd `q`; `2·half_mod(x, q) ≡ x (mod q)`.
pub fn half_mod(x: u64, q: u64) -> Result<u64> {
    if q % 2 == 0 {
        return Err(Error::EvenModulus(q));
    }
    if x >= q {
        return Err(Error::OperandOutOfRange { value: x, q });
    }
    Ok(if x & 1 == 0 {
        x >> 1
    } else {
        ((x >> 1) + (q + 1) / 2) % q
    })
}

pub fn mod_pow(base: u64, exp: u64, modulus: &Modulus) -> Result<u64> {
    modulus.check_operand(base)?;
    Ok(modulus.pow(base, exp))
}

fn ceil_log2(q: u64) -> u32 {
    64 - (q - 1).leading_zeros()
}

/// `floor(t·m / 2^shift)` without overflowing 128 bits.
fn mul_shr(t: u128, m: u64, shift: u32) -> u128 {
    if let Some(p) = t.checked_mul(m as u128) {
        return p >> shift;
    }
    debug_assert!(shift >= 64);
    let lo = (t as u64 as u128) * m as u128;
    let hi = (t >> 64) * m as u128;
    (hi + (lo >> 64)) >> (shift - 64)
}

#[inline]
fn mul_mod_u64(a: u64, b: u64, n: u64) -> u64 {
    (a as u128 * b as u128 % n as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, n: u64) -> u64 {
    let mut acc = 1 % n;
    b %= n;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, n);
        }
        b = mul_mod_u64(b, b, n);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Brent's variant of Pollard rho; `n` must be odd and composite.
fn pollard_rho(n: u64) -> Option<u64> {
    for c in 1..64u64 {
        let f = |x: u64| (mul_mod_u64(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        let mut iterations = 0u32;
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = gcd(x.abs_diff(y), n);
            iterations += 1;
            if iterations > 1 << 22 {
                break;
            }
        }
        if d != 1 && d != n {
            return Some(d);
        }
    }
    None
}

/// Distinct prime factors of `n`, ascending.
pub fn prime_factors(mut n: u64) -> Result<Vec<u64>> {
    let original = n;
    let mut factors = Vec::new();
    let mut p = 2u64;
    while p < 1000 && p * p <= n {
        if n % p == 0 {
            factors.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let mut stack = vec![n];
    while let Some(f) = stack.pop() {
        if f == 1 {
            continue;
        }
        if is_prime(f) {
            factors.push(f);
            continue;
        }
        let d = pollard_rho(f).ok_or(Error::Factorization(original))?;
        stack.push(d);
        stack.push(f / d);
    }
    factors.sort_unstable();
    factors.dedup();
    Ok(factors)
}

/// Smallest generator of `(Z/qZ)^*`.
pub fn find_primitive_root(q: u64) -> Result<u64> {
    if !is_prime(q) {
        return Err(Error::NotPrime(q));
    }
    if q == 2 {
        return Ok(1);
    }
    let factors = prime_factors(q - 1)?;
    (2..q)
        .find(|&g| factors.iter().all(|&p| pow_mod_u64(g, (q - 1) / p, q) != 1))
        .ok_or(Error::Factorization(q - 1))
}

/// The `index`-th largest prime `q < 2^bits` with `q ≡ 1 (mod 2n)`.
///
/// Candidates are visited downward from the top of the range in steps of `2n`.
pub fn find_ntt_prime(bits: u32, n: usize, index: usize) -> Result<u64> {
    if !(2..=62).contains(&bits) {
        return Err(Error::InvalidPrimeSearch(format!(
            "bit width {bits} outside [2, 62]"
        )));
    }
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let two_n = 2 * n as u64;
    let limit = 1u64 << bits;
    if two_n >= limit {
        return Err(Error::InvalidPrimeSearch(format!(
            "2N = {two_n} is not below 2^{bits}"
        )));
    }
    let mut candidate = (limit - 2) / two_n * two_n + 1;
    let mut seen = 0usize;
    while candidate > two_n {
        if is_prime(candidate) {
            if seen == index {
                return Ok(candidate);
            }
            seen += 1;
        }
        candidate -= two_n;
    }
    Err(Error::NoPrimeFound { bits, two_n, index })
}
