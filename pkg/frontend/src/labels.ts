// Gesture vocabulary in id order: 25 commands plus 2 background classes.
export const GESTURE_LABELS: readonly string[] = [
  "Start",
  "Stop",
  "Handwave",
  "Resume",
  "Pause",
  "Agree",
  "Disagree",
  "Repeat",
  "Undo",
  "Point to an Object",
  "Point to an Area",
  "I will Follow You",
  "Follow Me",
  "Watch Me",
  "Watch Out",
  "Speed up",
  "Slow down",
  "Thumbs up",
  "Thumbs down",
  "Give me an item",
  "Receive an item",
  "Move backwards",
  "Come forward",
  "Move to the left",
  "Move to the right",
  "Doing nothing",
  "Doing something else",
];

export const NUM_CLASSES = 27;
export const BACKGROUND_IDS = new Set([25, 26]);

export const PAUSE_ID = 4;
export const RESUME_ID = 3;
export const STOP_ID = 1;

export function labelFor(classId: number): string {
  return GESTURE_LABELS[classId] ?? `class ${classId}`;
}
