#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| sfs_fuzz::checks::dataset_jsonl(data));
