pub mod error;
pub mod game;
pub mod linalg;
pub mod schedules;
pub mod seq;
pub mod systems;
