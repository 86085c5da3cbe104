pub mod noise;
pub mod polygon;
pub mod sysid;
