#![allow(dead_code)]

pub mod chains;
