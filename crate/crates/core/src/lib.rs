pub mod episode;
pub mod geometry;
pub mod protocol;
pub mod scoring;
pub mod simulator;
pub mod skills;
pub mod tasks;
pub mod world;
pub mod render;
pub mod agents;
pub mod runner;
