//! Double-double 2x2 products for validation runs.

use std::ops::Mul;

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::lie::Mat2;

/// Arithmetic used for long matrix products.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    #[serde(rename = "dd")]
    DoubleDouble,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "double" => Ok(Precision::Double),
            "dd" => Ok(Precision::DoubleDouble),
            other => Err(format!(
                "unknown precision `{other}` (expected `double` or `dd`)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Mat2Dd {
    pub a: TwoFloat,
    pub b: TwoFloat,
    pub c: TwoFloat,
    pub d: TwoFloat,
}

impl Mat2Dd {
    pub fn to_f64(&self) -> Mat2 {
        Mat2::new(self.a.into(), self.b.into(), self.c.into(), self.d.into())
    }

    pub fn frobenius_sq(&self) -> f64 {
        let s = self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d;
        s.into()
    }
}

impl From<Mat2> for Mat2Dd {
    fn from(m: Mat2) -> Self {
        Mat2Dd {
            a: TwoFloat::from(m.a),
            b: TwoFloat::from(m.b),
            c: TwoFloat::from(m.c),
            d: TwoFloat::from(m.d),
        }
    }
}

impl Mul for Mat2Dd {
    type Output = Mat2Dd;

    fn mul(self, r: Mat2Dd) -> Mat2Dd {
        Mat2Dd {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}
