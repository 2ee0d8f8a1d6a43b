//! The bundled example programs and protocols.

use crate::loader::{build_config, check_program, resolve_defs};
use crate::parser::{parse_program, ParseError, SourceUnit};
use crate::runtime::Configuration;
use crate::typecheck::Mode;

pub struct CorpusEntry {
    pub name: &'static str,
    pub file: &'static str,
    pub text: &'static str,
    /// Language mode the program is written for.
    pub mode: Mode,
}

pub const PROGRAMS: &[CorpusEntry] = &[
    CorpusEntry {
        name: "pingpong",
        file: "pingpong.maty",
        text: include_str!("../corpus/pingpong.maty"),
        mode: Mode {
            zap: false,
            switch: false,
        },
    },
    CorpusEntry {
        name: "idserver",
        file: "idserver.maty",
        text: include_str!("../corpus/idserver.maty"),
        mode: Mode {
            zap: false,
            switch: false,
        },
    },
    CorpusEntry {
        name: "shop",
        file: "shop.maty",
        text: include_str!("../corpus/shop.maty"),
        mode: Mode {
            zap: false,
            switch: false,
        },
    },
    CorpusEntry {
        name: "supervised_shop",
        file: "supervised_shop.maty",
        text: include_str!("../corpus/supervised_shop.maty"),
        mode: Mode {
            zap: true,
            switch: false,
        },
    },
    CorpusEntry {
        name: "shop_restock",
        file: "shop_restock.maty",
        text: include_str!("../corpus/shop_restock.maty"),
        mode: Mode {
            zap: false,
            switch: true,
        },
    },
    CorpusEntry {
        name: "robot",
        file: "robot.maty",
        text: include_str!("../corpus/robot.maty"),
        mode: Mode {
            zap: false,
            switch: false,
        },
    },
    CorpusEntry {
        name: "chat",
        file: "chat.maty",
        text: include_str!("../corpus/chat.maty"),
        mode: Mode {
            zap: false,
            switch: false,
        },
    },
];

pub struct ProtocolEntry {
    pub name: &'static str,
    pub file: &'static str,
    pub text: &'static str,
}

pub const PROTOCOLS: &[ProtocolEntry] = &[
    ProtocolEntry {
        name: "pingpong",
        file: "pingpong.scr",
        text: include_str!("../corpus/pingpong.scr"),
    },
    ProtocolEntry {
        name: "idserver",
        file: "idserver.scr",
        text: include_str!("../corpus/idserver.scr"),
    },
    ProtocolEntry {
        name: "shop",
        file: "shop.scr",
        text: include_str!("../corpus/shop.scr"),
    },
    ProtocolEntry {
        name: "robot",
        file: "robot.scr",
        text: include_str!("../corpus/robot.scr"),
    },
    ProtocolEntry {
        name: "chat",
        file: "chat.scr",
        text: include_str!("../corpus/chat.scr"),
    },
];

pub fn program(name: &str) -> Option<&'static CorpusEntry> {
    PROGRAMS.iter().find(|e| e.name == name)
}

/// Parse and def-resolve a bundled program.
pub fn load(name: &str) -> Result<(SourceUnit, Mode), ParseError> {
    let entry = program(name).unwrap_or_else(|| panic!("no bundled program {name}"));
    let mut unit = parse_program(entry.text, &[])?;
    resolve_defs(&mut unit);
    Ok((unit, entry.mode))
}

/// Parse, typecheck, and build the initial configuration of a bundled
/// program, panicking on any failure (for tests).
pub fn load_checked(name: &str) -> (Configuration, Mode) {
    let (unit, mode) = load(name).unwrap_or_else(|e| panic!("parse {name}: {e}"));
    if let Err(errors) = check_program(&unit, mode, 4) {
        let msgs: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        panic!("typecheck {name}:\n{}", msgs.join("\n"));
    }
    (build_config(&unit, mode), mode)
}
