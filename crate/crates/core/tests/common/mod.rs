#![allow(dead_code)]

pub mod gen;
pub mod naive;
pub mod oracle;
