use serde::{Deserialize, Serialize};

/// Transition profile of a cutoff between `t = 1` and `t = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffProfile {
    /// `f(2-t) / (f(2-t) + f(t-1))` with `f(s) = exp(-1/s)`: C^infinity.
    #[default]
    ExpGlue,
}

/// Smooth non-increasing cutoff `chi: [0, inf) -> [0, 1]`, identically 1
/// on `[0, 1]` and identically 0 on `[2, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CutoffFunction {
    pub profile: CutoffProfile,
}

#[inline]
fn glue(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

impl CutoffFunction {
    pub fn new(profile: CutoffProfile) -> Self {
        CutoffFunction { profile }
    }

    /// Largest argument at which `chi` is nonzero.
    pub const SUPPORT: f64 = 2.0;

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        if t <= 1.0 {
            return 1.0;
        }
        if t >= 2.0 {
            return 0.0;
        }
        match self.profile {
            CutoffProfile::ExpGlue => {
                let a = glue(2.0 - t);
                let b = glue(t - 1.0);
                a / (a + b)
            }
        }
    }

    #[inline]
    pub fn eval_sq(&self, t: f64) -> f64 {
        let v = self.eval(t);
        v * v
    }

    /// `chi'(t)` for `t >= 0`.
    pub fn derivative(&self, t: f64) -> f64 {
        let t = t.abs();
        if t <= 1.0 || t >= 2.0 {
            return 0.0;
        }
        match self.profile {
            CutoffProfile::ExpGlue => {
                let (s1, s2) = (2.0 - t, t - 1.0);
                let (a, b) = (glue(s1), glue(s2));
                // a' = -a / s1^2, b' = b / s2^2
                let da = -a / (s1 * s1);
                let db = b / (s2 * s2);
                let denom = a + b;
                (da * b - a * db) / (denom * denom)
            }
        }
    }
}
