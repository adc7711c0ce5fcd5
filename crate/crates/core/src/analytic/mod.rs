pub mod combinatorics;
pub mod constants;
pub mod covtable;
pub mod gauss_taylor;
pub mod hermite;
pub mod identities;
pub mod poly;
pub mod wick;
