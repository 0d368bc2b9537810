pub mod autodiff;
pub mod diagnostics;
pub mod encoders;
pub mod ids;
pub mod lm;
pub mod phono;
pub mod pron;
pub mod tooling;
