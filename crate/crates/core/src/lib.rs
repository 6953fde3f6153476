pub mod assets;
pub mod geometry;
pub mod renderer;
pub mod viewgrid;
pub mod backends;
pub mod prompts;
pub mod text;
pub mod selection;
pub mod reasoning;
pub mod fixtures;
pub mod session;
