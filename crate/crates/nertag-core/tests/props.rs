//! Property tests for the corpus layer: tag/span round trips, character
//! normalization invariants, and file format round trips.

use nertag_core::corpus::{
    CHAR_VOCAB_SIZE, IobTag, PosTag, Sentence, Token, normalize_chars, normalized_form,
    parse_conll, serialize_conll, spans_to_tags, tags_to_spans, tags_to_spans_lenient,
    validate_iob,
};
use proptest::prelude::*;

/// A valid IOB sequence, built left to right by sampling uniformly among
/// the tags the scheme allows after the previous one.
fn valid_tags(max_len: usize) -> impl Strategy<Value = Vec<IobTag>> {
    (1..=max_len, any::<u64>()).prop_map(|(len, seed)| {
        let mut state = seed;
        let mut next = move |n: usize| {
            // xorshift is plenty for picking branches.
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % n as u64) as usize
        };
        let mut tags: Vec<IobTag> = Vec::with_capacity(len);
        for _ in 0..len {
            let prev = tags.last().copied();
            let legal: Vec<IobTag> = IobTag::all().filter(|t| t.can_follow(prev)).collect();
            tags.push(legal[next(legal.len())]);
        }
        tags
    })
}

fn any_tag() -> impl Strategy<Value = IobTag> {
    (0..IobTag::COUNT).prop_map(|i| IobTag::from_index(i).unwrap())
}

proptest! {
    #[test]
    fn constructed_sequences_validate(tags in valid_tags(24)) {
        prop_assert!(validate_iob(&tags).is_empty());
    }

    #[test]
    fn spans_round_trip(tags in valid_tags(24)) {
        let spans = tags_to_spans(&tags).expect("constructed sequence is valid");
        let back = spans_to_tags(&spans, tags.len()).expect("spans from valid tags");
        prop_assert_eq!(back, tags);
    }

    #[test]
    fn strict_conversion_agrees_with_validation(tags in proptest::collection::vec(any_tag(), 1..24)) {
        let violations = validate_iob(&tags);
        let spans = tags_to_spans(&tags);
        prop_assert_eq!(violations.is_empty(), spans.is_ok());
        if let Ok(spans) = spans {
            prop_assert_eq!(tags_to_spans_lenient(&tags), spans);
        }
    }

    #[test]
    fn lenient_conversion_always_yields_legal_spans(tags in proptest::collection::vec(any_tag(), 1..24)) {
        let spans = tags_to_spans_lenient(&tags);
        // Legal spans convert back without error and the result validates.
        let back = spans_to_tags(&spans, tags.len()).expect("lenient spans are well formed");
        prop_assert!(validate_iob(&back).is_empty());
        // Entity coverage matches: a position is inside some span exactly
        // when its tag was not O.
        for (i, tag) in tags.iter().enumerate() {
            let covered = spans.iter().any(|s| s.start <= i && i < s.end);
            prop_assert_eq!(covered, *tag != IobTag::O, "position {}", i);
        }
    }

    #[test]
    fn normalization_is_total_and_idempotent(s in "\\PC{0,40}") {
        let idx = normalize_chars(&s);
        prop_assert_eq!(idx.len(), s.chars().count());
        prop_assert!(idx.iter().all(|&i| i < CHAR_VOCAB_SIZE));

        let form = normalized_form(&s);
        prop_assert_eq!(normalized_form(&form), form.clone());
        prop_assert_eq!(normalize_chars(&form), idx);
    }

    #[test]
    fn conll_round_trips(
        surfaces in proptest::collection::vec("[A-Za-z0-9.,'()\\-]{1,10}", 1..12),
        pos_picks in proptest::collection::vec(0..PosTag::COUNT, 12),
        tags in valid_tags(12),
    ) {
        let len = surfaces.len().min(tags.len());
        let tokens: Vec<Token> = (0..len)
            .map(|i| {
                let pos = PosTag::from_index(pos_picks[i]).unwrap();
                Token::new(surfaces[i].clone(), pos, tags[i]).unwrap()
            })
            .collect();
        // Truncating a valid tag sequence can strand nothing: prefixes of
        // valid IOB sequences stay valid.
        let sent = Sentence::new(tokens).expect("prefix of a valid sequence");
        let text = serialize_conll(core::slice::from_ref(&sent));
        let parsed = parse_conll(&text).expect("serializer output is parseable");
        prop_assert_eq!(parsed, vec![sent]);
    }
}
