/** Fixed agent palette: color is a function of the agent id's rank among
 * all known ids, so the same fleet always renders the same way. */
export const AGENT_PALETTE = [
  "#58a6ff",
  "#3fb950",
  "#d29922",
  "#f85149",
  "#bc8cff",
  "#39c5cf",
  "#ff7b72",
  "#7ee787",
  "#ffa657",
  "#79c0ff",
] as const;

export function colorFor(agentId: string, knownIds: readonly string[]): string {
  const ordered = [...new Set(knownIds)].sort();
  const index = ordered.indexOf(agentId);
  return AGENT_PALETTE[(index >= 0 ? index : ordered.length) % AGENT_PALETTE.length];
}
