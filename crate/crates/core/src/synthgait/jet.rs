//! Second-order forward-mode derivatives of scalar functions of time.

use std::ops::{Add, Mul, Neg, Sub};

/// Value with first and second time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            d1: 0.0,
            d2: 0.0,
        }
    }

    /// The independent variable itself.
    pub fn variable(t: f64) -> Self {
        Jet {
            v: t,
            d1: 1.0,
            d2: 0.0,
        }
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Jet {
            v: f,
            d1: df * self.d1,
            d2: ddf * self.d1 * self.d1 + df * self.d2,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
        }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, o: f64) -> Jet {
        Jet {
            v: self.v + o,
            ..self
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, o: f64) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            v: -self.v,
            d1: -self.d1,
            d2: -self.d2,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, k: f64) -> Jet {
        Jet {
            v: self.v * k,
            d1: self.d1 * k,
            d2: self.d2 * k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_composite() {
        // f(t) = t * sin(2t) + 3
        let t = 0.7;
        let j = Jet::variable(t) * (Jet::variable(t) * 2.0).sin() + 3.0;
        let (s, c) = (2.0 * t).sin_cos();
        assert!((j.v - (t * s + 3.0)).abs() < 1e-15);
        assert!((j.d1 - (s + 2.0 * t * c)).abs() < 1e-14);
        assert!((j.d2 - (4.0 * c - 4.0 * t * s)).abs() < 1e-14);
    }
}
