pub mod angmath;
pub mod hypergeom;
pub mod numerics;
pub mod interaction;
pub mod container;
pub mod chanbasis;
pub mod radial;
pub mod evolve;
pub mod stationary;
pub mod kick;
pub mod observe;
pub mod refmodels;
pub mod shell;
