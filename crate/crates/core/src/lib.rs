pub mod encoding;
pub mod raster;
pub mod sim;
pub mod terrain;
