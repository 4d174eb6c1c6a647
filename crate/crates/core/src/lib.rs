pub mod canonical;
pub mod fixtures;
pub mod gateway;
pub mod governance;
pub mod identification;
pub mod indicators;
pub mod lifecycle;
pub mod numeric;
pub mod register;
pub mod riskmodel;
pub mod time;
pub mod tolerance;
