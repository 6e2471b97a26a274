/** Color assignment for group labels. */

/** Gaussians with label -1 (ungrouped) render grey. */
export const UNGROUPED_COLOR = "#9aa0a6";

/** Distinct hues for group labels; labels wrap around when they run out. */
export const GROUP_PALETTE: readonly string[] = [
  "#e6194b",
  "#3cb44b",
  "#4363d8",
  "#f58231",
  "#911eb4",
  "#46f0f0",
  "#f032e6",
  "#bcf60c",
  "#008080",
  "#9a6324",
  "#800000",
  "#808000",
];

/** Map a group label to its display color. */
export function groupColor(label: number): string {
  if (label < 0) {
    return UNGROUPED_COLOR;
  }
  return GROUP_PALETTE[label % GROUP_PALETTE.length];
}

/** Colors for a whole label array, one entry per Gaussian. */
export function labelColors(labels: Int32Array): string[] {
  const out = new Array<string>(labels.length);
  for (let i = 0; i < labels.length; i++) {
    out[i] = groupColor(labels[i]);
  }
  return out;
}
