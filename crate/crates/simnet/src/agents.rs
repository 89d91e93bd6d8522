//! What each strategy does with an assignment.

use witnet_core::rad::WitnessView;
use witnet_core::ParticipantId;

use crate::scenario::Strategy;

impl Strategy {
    /// Whether the participant acts on a task assignment at all.
    pub fn accepts_tasks(self) -> bool {
        !matches!(self, Strategy::Lazy)
    }

    pub fn reveals(self) -> bool {
        !matches!(self, Strategy::NoReveal | Strategy::Lazy)
    }

    /// The claim source: faithful retrieval, or a fixed false value. Liars
    /// each pick their own lie; cartel members share one.
    pub fn view(self, me: &ParticipantId) -> WitnessView {
        match self {
            Strategy::Liar => WitnessView::Substitute(format!("lie:{}", &me.0.to_hex()[..16]).into_bytes()),
            Strategy::Colluder(c) => WitnessView::Substitute(format!("cartel:{c}").into_bytes()),
            _ => WitnessView::Faithful,
        }
    }
}
