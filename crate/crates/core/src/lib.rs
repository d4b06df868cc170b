pub mod poly;
pub mod sdp;
pub mod sim;
pub mod certify;
pub mod sosprog;
pub mod cli;
