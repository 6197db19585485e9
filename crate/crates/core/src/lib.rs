//! Numerical laboratory for the linear algebra and Hessian geometry of
//! G2 moduli spaces, exercised on explicit model families where every
//! quantity is computable in closed form or by finite differences.

pub mod config;
pub mod exterior;
pub mod g2;
pub mod models;
pub mod moduli;
pub mod numdiff;
pub mod period;
pub mod report;
pub mod suites;

pub use exterior::{AltForm, Endo7, Metric7, MultiIndex};
pub use g2::{G2Frame, PositiveForm};
pub use models::{FlatOrbifoldChart, FullTorusFamily, ModelFamily, T3K3Chart};
pub use moduli::{HessianGeometry, PotentialJet};
pub use numdiff::FdScheme;
