//! Polynomial smoothstep profiles and small derivative jets.

use std::ops::{Add, Mul};

/// Smoothstep of order `q`: the regularized incomplete beta `I_s(q, q)`,
/// clamped to 0 for `s ≤ 0` and 1 for `s ≥ 1`. It is `C^(q-1)` and behaves
/// like `s^q` near 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothstep {
    q: u32,
    inv_beta: f64,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Smoothstep {
    pub fn new(q: u32) -> Self {
        assert!(q >= 2, "smoothstep order must be at least 2");
        // 1/B(q,q) = (2q-1)! / ((q-1)!)^2 = q·C(2q-1, q)
        let inv_beta = q as f64 * binomial(2 * q - 1, q);
        Self { q, inv_beta }
    }

    /// Smallest order whose edge ratio `|S'|/S^rho` stays bounded, plus one.
    pub fn order_for_rho(rho: f64) -> u32 {
        ((1.0 / (1.0 - rho)) - 1e-9).ceil() as u32 + 1
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    fn lower(&self, s: f64) -> f64 {
        let m = 2 * self.q - 1;
        (self.q..=m)
            .map(|k| binomial(m, k) * s.powi(k as i32) * (1.0 - s).powi((m - k) as i32))
            .sum()
    }

    pub fn value(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else if s <= 0.5 {
            self.lower(s)
        } else {
            1.0 - self.lower(1.0 - s)
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        let e = (self.q - 1) as i32;
        self.inv_beta * s.powi(e) * (1.0 - s).powi(e)
    }

    pub fn d2(&self, s: f64) -> f64 {
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        let e = (self.q - 2) as i32;
        self.inv_beta * (self.q - 1) as f64 * s.powi(e) * (1.0 - s).powi(e) * (1.0 - 2.0 * s)
    }

    pub fn jet(&self, s: f64) -> Jet1 {
        Jet1 {
            v: self.value(s),
            d1: self.d1(s),
            d2: self.d2(s),
        }
    }
}

/// Value with first and second derivative of a function of one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet1 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet1 {
    pub fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    /// `self / other`; `other.v` must be nonzero.
    pub fn div(self, other: Jet1) -> Jet1 {
        let v = self.v / other.v;
        let d1 = (self.d1 - v * other.d1) / other.v;
        let d2 = (self.d2 - 2.0 * d1 * other.d1 - v * other.d2) / other.v;
        Jet1 { v, d1, d2 }
    }
}

impl Add for Jet1 {
    type Output = Jet1;
    fn add(self, o: Jet1) -> Jet1 {
        Jet1 {
            v: self.v + o.v,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
        }
    }
}

/// Value, gradient and Laplacian of a function on `R^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
    pub l: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet {
        v: 0.0,
        g: [0.0; 3],
        l: 0.0,
    };

    pub fn constant(v: f64) -> Self {
        Jet { v, g: [0.0; 3], l: 0.0 }
    }

    pub fn grad_norm(&self) -> f64 {
        (self.g[0] * self.g[0] + self.g[1] * self.g[1] + self.g[2] * self.g[2]).sqrt()
    }

    /// Separable product `f_0(x) f_1(y) f_2(z)`.
    pub fn separable(f: [Jet1; 3]) -> Jet {
        let v = f[0].v * f[1].v * f[2].v;
        let g = [
            f[0].d1 * f[1].v * f[2].v,
            f[0].v * f[1].d1 * f[2].v,
            f[0].v * f[1].v * f[2].d1,
        ];
        let l = f[0].d2 * f[1].v * f[2].v + f[0].v * f[1].d2 * f[2].v + f[0].v * f[1].v * f[2].d2;
        Jet { v, g, l }
    }

    /// `self^p` for `self.v > 0`; zero jet when the value vanishes.
    pub fn powf(self, p: f64) -> Jet {
        if self.v <= 0.0 {
            return Jet::ZERO;
        }
        if p == 1.0 {
            return self;
        }
        let vp1 = self.v.powf(p - 1.0);
        let g2 = self.g.iter().map(|x| x * x).sum::<f64>();
        Jet {
            v: vp1 * self.v,
            g: self.g.map(|x| p * vp1 * x),
            l: p * vp1 * self.l + p * (p - 1.0) * vp1 / self.v * g2,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let g = [
            self.v * o.g[0] + o.v * self.g[0],
            self.v * o.g[1] + o.v * self.g[1],
            self.v * o.g[2] + o.v * self.g[2],
        ];
        let cross = self.g[0] * o.g[0] + self.g[1] * o.g[1] + self.g[2] * o.g[2];
        Jet {
            v: self.v * o.v,
            g,
            l: self.v * o.l + 2.0 * cross + o.v * self.l,
        }
    }
}
