//! Bundled benchmark intents, reference manifests and scripted transcripts.

pub const BENCHMARKS: [&str; 5] = ["gomoku", "plane_battle", "city_sim", "snake", "roguelike"];

pub fn intent(name: &str) -> Option<&'static str> {
    Some(match name {
        "gomoku" => include_str!("../fixtures/intents/gomoku.txt"),
        "plane_battle" => include_str!("../fixtures/intents/plane_battle.txt"),
        "city_sim" => include_str!("../fixtures/intents/city_sim.txt"),
        "snake" => include_str!("../fixtures/intents/snake.txt"),
        "roguelike" => include_str!("../fixtures/intents/roguelike.txt"),
        _ => return None,
    })
}

pub fn manifest(name: &str) -> Option<&'static str> {
    Some(match name {
        "gomoku" => include_str!("../fixtures/manifests/gomoku.txt"),
        "plane_battle" => include_str!("../fixtures/manifests/plane_battle.txt"),
        "city_sim" => include_str!("../fixtures/manifests/city_sim.txt"),
        "snake" => include_str!("../fixtures/manifests/snake.txt"),
        "roguelike" => include_str!("../fixtures/manifests/roguelike.txt"),
        _ => return None,
    })
}

/// Scripted transcripts exist for the two small benchmarks.
pub fn transcript(name: &str) -> Option<&'static str> {
    Some(match name {
        "gomoku" => include_str!("../fixtures/gomoku.jsonl"),
        "plane_battle" => include_str!("../fixtures/plane_battle.jsonl"),
        _ => return None,
    })
}
