pub mod calibrate;
pub mod evaluate;
pub mod flow_gt;
pub mod gen_synth;
pub mod init_semantic;
pub mod sequence_median;
