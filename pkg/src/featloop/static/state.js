export function initialState(cursor = 0) {
    return {
        records: new Map(),
        cursor,
        agentFilter: "",
        expanded: new Set(),
        sortKey: "seq",
        sortDir: -1,
        agents: [],
        lastSeq: 0,
        stale: false,
        seedError: null,
        lastAck: null,
        controlBusy: false,
    };
}
export function ingestPage(state, page) {
    if (page.records.length === 0) {
        return state;
    }
    const records = new Map(state.records);
    let cursor = state.cursor;
    let lastSeq = state.lastSeq;
    for (const record of page.records) {
        records.set(record.seq, record);
        if (record.seq > cursor)
            cursor = record.seq;
        if (record.seq > lastSeq)
            lastSeq = record.seq;
    }
    return { ...state, records, cursor, lastSeq };
}
export function setAgentFilter(state, agentId) {
    return { ...state, agentFilter: agentId };
}
export function toggleExpanded(state, promptId) {
    const expanded = new Set(state.expanded);
    if (expanded.has(promptId)) {
        expanded.delete(promptId);
    }
    else {
        expanded.add(promptId);
    }
    return { ...state, expanded };
}
/** Clicking the active column flips direction; a new column sorts descending
 * by score/seq and ascending by the text columns. */
export function setSort(state, key) {
    if (key === state.sortKey) {
        return { ...state, sortDir: state.sortDir === 1 ? -1 : 1 };
    }
    return { ...state, sortKey: key, sortDir: key === "agent" || key === "status" ? 1 : -1 };
}
export function applyAgents(state, payload) {
    return {
        ...state,
        agents: payload.agents,
        lastSeq: Math.max(state.lastSeq, payload.last_seq),
    };
}
export function setStale(state, stale) {
    return state.stale === stale ? state : { ...state, stale };
}
export function setSeedError(state, message) {
    return { ...state, seedError: message };
}
export function setAck(state, ack) {
    return { ...state, lastAck: ack };
}
export function setControlBusy(state, busy) {
    return { ...state, controlBusy: busy };
}
export function knownAgentIds(state) {
    const ids = new Set(state.agents.map((a) => a.agent_id));
    for (const record of state.records.values()) {
        if (record.agent_id)
            ids.add(record.agent_id);
    }
    return [...ids].sort();
}
/** The table body: filtered, then fully ordered by the chosen column with
 * seq as the tiebreak so the row order is total and stable. */
export function visibleRecords(state) {
    const rows = [...state.records.values()].filter((r) => !state.agentFilter || r.agent_id === state.agentFilter);
    const dir = state.sortDir;
    rows.sort((a, b) => {
        let cmp = 0;
        switch (state.sortKey) {
            case "seq":
                cmp = a.seq - b.seq;
                break;
            case "score":
                cmp = a.relative_score - b.relative_score;
                break;
            case "agent":
                cmp = a.agent_id < b.agent_id ? -1 : a.agent_id > b.agent_id ? 1 : 0;
                break;
            case "status":
                cmp = a.status < b.status ? -1 : a.status > b.status ? 1 : 0;
                break;
        }
        return cmp !== 0 ? cmp * dir : a.seq - b.seq;
    });
    return rows;
}
