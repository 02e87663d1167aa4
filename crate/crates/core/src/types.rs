use std::ops::Deref;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A model state `x_t`. Never empty, always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec(DVector<f64>);

/// An observation `y_t`. Never empty, always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsVec(DVector<f64>);

fn check(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::dim(what, 1, 0));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

macro_rules! vector_newtype {
    ($name:ident, $what:literal) => {
        impl $name {
            pub fn new(values: DVector<f64>) -> Result<Self> {
                check(&values, $what)?;
                Ok(Self(values))
            }

            pub fn from_slice(values: &[f64]) -> Result<Self> {
                Self::new(DVector::from_column_slice(values))
            }

            pub fn into_inner(self) -> DVector<f64> {
                self.0
            }

            pub fn as_vector(&self) -> &DVector<f64> {
                &self.0
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;

            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl TryFrom<Vec<f64>> for $name {
            type Error = Error;

            fn try_from(v: Vec<f64>) -> Result<Self> {
                Self::new(DVector::from_vec(v))
            }
        }
    };
}

vector_newtype!(StateVec, "state vector");
vector_newtype!(ObsVec, "observation vector");
