use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// One of the four reference nonlinear boundary value problems.
///
/// All 1D problems live on `[0, 2π]` with `u(0) = u(2π) = 0`; the biharmonic
/// problem is additionally clamped (`u'(0) = u'(2π) = 0`). The 2D Poisson
/// problem has homogeneous Dirichlet data on the square boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemSpec {
    /// `u'' + α u + ε u³ = F`
    CubicHelmholtz { alpha: f64, eps: f64 },
    /// `[-p(x) u']' + q(x) (u + ε u³) = F` with `p = 0.5 sin x − 3`, `q = 0.6 sin x − 2`
    SturmLiouville { eps: f64 },
    /// `[-p u'']'' + q (u + ε u³) = F`
    Biharmonic { p: f64, q: f64, eps: f64 },
    /// `−∇·[(1 + u²) ∇u] = F`
    Poisson2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemId {
    Helmholtz = 0,
    SturmLiouville = 1,
    Biharmonic = 2,
    Poisson2D = 3,
}

impl SystemSpec {
    pub fn cubic_helmholtz() -> Self {
        SystemSpec::CubicHelmholtz { alpha: -1.0, eps: -0.3 }
    }

    pub fn sturm_liouville() -> Self {
        SystemSpec::SturmLiouville { eps: 0.4 }
    }

    pub fn biharmonic() -> Self {
        SystemSpec::Biharmonic { p: -4.0, q: 2.0, eps: 0.4 }
    }

    pub fn poisson_2d() -> Self {
        SystemSpec::Poisson2D
    }

    /// Reference coefficients for a system id.
    pub fn from_id(id: SystemId) -> Self {
        match id {
            SystemId::Helmholtz => Self::cubic_helmholtz(),
            SystemId::SturmLiouville => Self::sturm_liouville(),
            SystemId::Biharmonic => Self::biharmonic(),
            SystemId::Poisson2D => Self::poisson_2d(),
        }
    }

    pub fn id(&self) -> SystemId {
        match self {
            SystemSpec::CubicHelmholtz { .. } => SystemId::Helmholtz,
            SystemSpec::SturmLiouville { .. } => SystemId::SturmLiouville,
            SystemSpec::Biharmonic { .. } => SystemId::Biharmonic,
            SystemSpec::Poisson2D => SystemId::Poisson2D,
        }
    }

    pub fn dim(&self) -> u8 {
        match self {
            SystemSpec::Poisson2D => 2,
            _ => 1,
        }
    }
}

/// Sturm–Liouville leading coefficient `p(x)`; strictly negative on the domain.
pub fn sl_p(x: f64) -> f64 {
    0.5 * x.sin() - 3.0
}

/// Sturm–Liouville reaction coefficient `q(x)`; strictly negative on the domain.
pub fn sl_q(x: f64) -> f64 {
    0.6 * x.sin() - 2.0
}

impl SystemId {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(SystemId::Helmholtz),
            1 => Some(SystemId::SturmLiouville),
            2 => Some(SystemId::Biharmonic),
            3 => Some(SystemId::Poisson2D),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemId::Helmholtz => "helmholtz",
            SystemId::SturmLiouville => "sturm-liouville",
            SystemId::Biharmonic => "biharmonic",
            SystemId::Poisson2D => "poisson2d",
        }
    }

    pub fn dim(&self) -> u8 {
        if *self == SystemId::Poisson2D {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "helmholtz" | "cubic-helmholtz" => Ok(SystemId::Helmholtz),
            "sturm-liouville" | "sl" => Ok(SystemId::SturmLiouville),
            "biharmonic" => Ok(SystemId::Biharmonic),
            "poisson2d" | "poisson" => Ok(SystemId::Poisson2D),
            other => Err(Error::InvalidInput(format!("unknown system '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sl_coefficients_never_vanish() {
        for i in 0..=1000 {
            let x = 2.0 * std::f64::consts::PI * i as f64 / 1000.0;
            assert!(sl_p(x) <= -2.5);
            assert!(sl_q(x) <= -1.4);
        }
    }

    #[test]
    fn ids_roundtrip() {
        for id in [SystemId::Helmholtz, SystemId::SturmLiouville, SystemId::Biharmonic, SystemId::Poisson2D] {
            assert_eq!(SystemId::from_u8(id as u8), Some(id));
            assert_eq!(id.name().parse::<SystemId>().unwrap(), id);
            assert_eq!(SystemSpec::from_id(id).id(), id);
        }
        assert!("wave".parse::<SystemId>().is_err());
    }
}
