//! Double-double accumulation for the few sums whose rounding error gets
//! divided by a small temperature.
//!
//! A [`Dd`] holds an unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`,
//! carrying roughly 106 significant bits.

/// Error-free sum: `a + b = s + e` exactly.
#[inline]
pub(crate) fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Error-free product: `a * b = p + e` exactly (barring underflow).
#[inline]
pub(crate) fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    #[inline]
    pub fn add(self, x: f64) -> Self {
        let (s, e) = two_sum(self.hi, x);
        Self::new(s, e + self.lo)
    }

    #[inline]
    pub fn add_dd(self, o: Dd) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        Self::new(s, e + self.lo + o.lo)
    }

    /// `self + a * b` with the product formed exactly.
    #[inline]
    pub fn add_prod(self, a: f64, b: f64) -> Self {
        let (p, pe) = two_prod(a, b);
        let (s, e) = two_sum(self.hi, p);
        Self::new(s, e + pe + self.lo)
    }

    /// `self + a * (b.hi + b.lo)`.
    #[inline]
    pub fn add_prod_dd(self, a: f64, b: Dd) -> Self {
        let (p, pe) = two_prod(a, b.hi);
        let (s, e) = two_sum(self.hi, p);
        Self::new(s, e + pe + a * b.lo + self.lo)
    }

    #[inline]
    pub fn scale(self, c: f64) -> Self {
        let (p, e) = two_prod(self.hi, c);
        Self::new(p, e + self.lo * c)
    }

    #[inline]
    pub fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}
