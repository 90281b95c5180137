pub mod checker;
pub mod codec;
pub mod dynamic;
pub mod identity;
pub mod protocol;
pub mod registry;
pub mod ring;
pub mod sim;
