export const PLACEHOLDER = "{raw_text}";

/**
 * Client-side template check, mirroring the server's rule: a seed prompt
 * must contain the raw-text placeholder exactly once. Returns an error
 * message, or null when the template is submittable.
 */
export function templateError(text: string): string | null {
  if (!text.trim()) {
    return "template is empty";
  }
  const occurrences = text.split(PLACEHOLDER).length - 1;
  if (occurrences === 0) {
    return `template contains no ${PLACEHOLDER} placeholder`;
  }
  if (occurrences > 1) {
    return `template contains ${occurrences} ${PLACEHOLDER} placeholders`;
  }
  return null;
}
