//! Mixed displacement-stress physics-informed networks for 2D linear
//! elasticity, certified by the constitutive relation error.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix `f64`, which is what the
//! harness and CLI use.

pub mod autodiff;
pub mod cre;
pub mod elasticity;
pub mod network;
pub mod pinn;
pub mod scalar;

pub use scalar::Real;

pub type Graph = autodiff::ScalarGraph<f64>;
pub type Material = elasticity::Material<f64>;
pub type Tensor = elasticity::Tensor2<f64>;
pub type Problem = elasticity::ManufacturedProblem<f64>;
pub type Network = network::FieldNetwork<f64>;
pub type Solution = network::MixedSolution<f64>;
pub type Collocation = pinn::CollocationSet<f64>;
pub type Loss = pinn::LossConfig<f64>;
pub type Breakdown = pinn::LossBreakdown<f64>;
pub type Training = pinn::TrainConfig<f64>;
pub type Grid = cre::QuadratureGrid<f64>;
pub type Report = cre::ErrorReport<f64>;
