pub mod config;
pub mod diagnostics;
pub mod flow;
pub mod histogram;
pub mod ibm;
pub mod initial;
pub mod io;
pub mod model;
pub mod observable;
pub mod pde;
