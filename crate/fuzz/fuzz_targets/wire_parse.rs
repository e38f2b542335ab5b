#![no_main]

use libfuzzer_sys::fuzz_target;
use sparseloco::SparseMessage;

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = SparseMessage::parse(data) {
        // Anything accepted must re-serialize to the same bytes and decode.
        let again = msg.serialize().expect("accepted message serializes");
        assert_eq!(again.as_slice(), data);
        assert_eq!(msg.encoded_len(), data.len() as u64);
        let _ = msg.to_dense::<f32>();
    }
});
