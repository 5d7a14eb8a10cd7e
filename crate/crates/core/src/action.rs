//! The predefined action arrays and the two embodiments they belong to.

use serde::{Deserialize, Serialize};

use crate::sim2d::{CommandArray, MAX_JOINT, MAX_TRANSLATE, MAX_YAW};

pub const ACTION_COUNT: usize = 10;
pub const BASE_ACTIONS: std::ops::Range<usize> = 0..4;
pub const ARM_ACTIONS: std::ops::Range<usize> = 4..10;

pub const FORWARD: usize = 0;
pub const BACKWARD: usize = 1;
pub const YAW_LEFT: usize = 2;
pub const YAW_RIGHT: usize = 3;

/// Action index moving `joint` (0..3) up or down.
pub fn joint_action(joint: usize, positive: bool) -> usize {
    4 + 2 * joint + usize::from(!positive)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Embodiment {
    Base,
    Arm,
}

impl Embodiment {
    pub fn index(self) -> usize {
        match self {
            Embodiment::Base => 0,
            Embodiment::Arm => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Embodiment::Base
        } else {
            Embodiment::Arm
        }
    }

    pub fn actions(self) -> std::ops::Range<usize> {
        match self {
            Embodiment::Base => BASE_ACTIONS,
            Embodiment::Arm => ARM_ACTIONS,
        }
    }

    pub fn owns(self, action: usize) -> bool {
        self.actions().contains(&action)
    }

    pub fn of_action(action: usize) -> Self {
        if BASE_ACTIONS.contains(&action) {
            Embodiment::Base
        } else {
            Embodiment::Arm
        }
    }
}

/// Two-element one-hot `(base, arm)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionMask(Embodiment);

impl SelectionMask {
    pub const BASE: SelectionMask = SelectionMask(Embodiment::Base);
    pub const ARM: SelectionMask = SelectionMask(Embodiment::Arm);

    pub fn new(e: Embodiment) -> Self {
        Self(e)
    }

    pub fn embodiment(self) -> Embodiment {
        self.0
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self.0 {
            Embodiment::Base => [1.0, 0.0],
            Embodiment::Arm => [0.0, 1.0],
        }
    }

    pub fn is_arm(self) -> bool {
        self.0 == Embodiment::Arm
    }
}

/// Command array for a predefined action index.
pub fn command_for(action: usize) -> CommandArray {
    let mut c = [0.0; 7];
    match action {
        FORWARD => c[0] = MAX_TRANSLATE,
        BACKWARD => c[0] = -MAX_TRANSLATE,
        YAW_LEFT => c[1] = MAX_YAW,
        YAW_RIGHT => c[1] = -MAX_YAW,
        4..=9 => {
            let joint = (action - 4) / 2;
            c[2 + joint] = if (action - 4).is_multiple_of(2) { MAX_JOINT } else { -MAX_JOINT };
        }
        _ => panic!("action index {action} out of range"),
    }
    CommandArray(c)
}

/// True when every command channel of the embodiment not selected by `mask` is zero.
pub fn respects_mask(cmd: &CommandArray, mask: SelectionMask) -> bool {
    let idle = match mask.embodiment() {
        Embodiment::Base => cmd.arm_channels(),
        Embodiment::Arm => cmd.base_channels(),
    };
    idle.iter().all(|v| *v == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commands_respect_their_embodiment_and_caps() {
        for a in 0..ACTION_COUNT {
            let cmd = command_for(a);
            cmd.validate().unwrap();
            let e = Embodiment::of_action(a);
            assert!(respects_mask(&cmd, SelectionMask::new(e)));
            assert!(!respects_mask(&cmd, SelectionMask::new(if e == Embodiment::Base { Embodiment::Arm } else { Embodiment::Base })));
        }
        assert_eq!(joint_action(1, false), 7);
        assert_eq!(command_for(joint_action(2, true)).0[4], MAX_JOINT);
    }
}
