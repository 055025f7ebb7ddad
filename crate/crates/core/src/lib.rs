pub mod ensemble;
pub mod error;
pub mod hamming;
pub mod metawalk;
pub mod moments;
pub mod oracle;
pub mod perturbation;
pub mod spectral;
pub mod stats;
pub mod theory;
