pub mod generate;
pub mod plot;
pub mod pseudo;
pub mod smooth;
pub mod train;
