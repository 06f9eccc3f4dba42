//! Second-order forward-mode jets in two variables.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value, gradient and Hessian `(11, 12, 22)` of a function of `(x1, x2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; 2],
    pub hh: [f64; 3],
}

impl Jet {
    pub fn constant(v: f64) -> Jet {
        Jet { v, d: [0.0; 2], hh: [0.0; 3] }
    }

    pub fn var1(v: f64) -> Jet {
        Jet { v, d: [1.0, 0.0], hh: [0.0; 3] }
    }

    pub fn var2(v: f64) -> Jet {
        Jet { v, d: [0.0, 1.0], hh: [0.0; 3] }
    }

    /// `f(self)` given `f`, `f'`, `f''` at `self.v`.
    pub fn compose(self, f0: f64, f1: f64, f2: f64) -> Jet {
        let [a, b] = self.d;
        Jet {
            v: f0,
            d: [f1 * a, f1 * b],
            hh: [f2 * a * a + f1 * self.hh[0], f2 * a * b + f1 * self.hh[1], f2 * b * b + f1 * self.hh[2]],
        }
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn sinh(self) -> Jet {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.compose(s, c, s)
    }

    pub fn cosh(self) -> Jet {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.compose(c, s, c)
    }

    pub fn exp(self) -> Jet {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    pub fn sqrt(self) -> Jet {
        let r = self.v.sqrt();
        self.compose(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn recip(self) -> Jet {
        let r = 1.0 / self.v;
        self.compose(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powi(self, k: i32) -> Jet {
        let kf = k as f64;
        self.compose(self.v.powi(k), kf * self.v.powi(k - 1), kf * (kf - 1.0) * self.v.powi(k - 2))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
            hh: [self.hh[0] + o.hh[0], self.hh[1] + o.hh[1], self.hh[2] + o.hh[2]],
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self, o);
        Jet {
            v: a.v * b.v,
            d: [a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1]],
            hh: [
                a.hh[0] * b.v + 2.0 * a.d[0] * b.d[0] + a.v * b.hh[0],
                a.hh[1] * b.v + a.d[0] * b.d[1] + a.d[1] * b.d[0] + a.v * b.hh[1],
                a.hh[2] * b.v + 2.0 * a.d[1] * b.d[1] + a.v * b.hh[2],
            ],
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet { v: self.v * c, d: [self.d[0] * c, self.d[1] * c], hh: [self.hh[0] * c, self.hh[1] * c, self.hh[2] * c] }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        Jet { v: self.v + c, ..self }
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, c: f64) -> Jet {
        Jet { v: self.v - c, ..self }
    }
}
