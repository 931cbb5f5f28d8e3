use super::{SnnError, StateRecord};

/// Class with the most output spikes. Ties go to the higher final membrane
/// potential, then to the lower class index.
pub fn decide_class<P: PartialOrd + Copy>(counts: &[u32], potentials: &[P]) -> usize {
    let mut best = 0;
    for i in 1..counts.len() {
        let better = counts[i] > counts[best]
            || (counts[i] == counts[best] && potentials[i] > potentials[best]);
        if better {
            best = i;
        }
    }
    best
}

pub fn predict_frame(record: &StateRecord) -> usize {
    decide_class(&record.output_counts(), record.final_potentials())
}

/// Majority vote over frame predictions; a tied vote goes to the last frame.
pub fn predict_stream(frame_predictions: &[usize]) -> Result<usize, SnnError> {
    let &last = frame_predictions.last().ok_or(SnnError::EmptyInput)?;
    let classes = frame_predictions.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; classes];
    for &p in frame_predictions {
        votes[p] += 1;
    }
    let top = *votes.iter().max().unwrap_or(&0);
    if votes.iter().filter(|&&v| v == top).count() > 1 && votes[last] == top {
        return Ok(last);
    }
    Ok(votes.iter().position(|&v| v == top).unwrap_or(last))
}
