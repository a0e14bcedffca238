#![no_main]

use adaptive_reach::io::corpus::{decode_corpus, encode_corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = decode_corpus(data) {
        let bytes = encode_corpus(&file).expect("decoded corpus encodes");
        assert_eq!(decode_corpus(&bytes).expect("re-encoded corpus decodes"), file);
    }
});
