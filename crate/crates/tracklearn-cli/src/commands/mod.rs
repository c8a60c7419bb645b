pub mod diff_ref;
pub mod learn;
pub mod matrix;
pub mod relative_degree;
pub mod repeat;
pub mod transfer_cmd;
