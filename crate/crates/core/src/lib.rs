pub mod bandwidth;
pub mod cli;
pub mod diffseq;
pub mod estimator;
pub mod io;
pub mod simlab;
pub mod smoother;
