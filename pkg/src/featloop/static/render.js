import { colorFor } from "./palette.js";
import { knownAgentIds, visibleRecords, } from "./state.js";
const PREVIEW_CHARS = 60;
export function escapeHtml(text) {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}
/** Inverse of escapeHtml for tests and copy actions: the renderer only ever
 * produces these four entities, so this recovers the original bytes. */
export function unescapeHtml(html) {
    return html
        .replace(/&quot;/g, '"')
        .replace(/&gt;/g, ">")
        .replace(/&lt;/g, "<")
        .replace(/&amp;/g, "&");
}
function formatScore(value) {
    return value.toFixed(6);
}
function preview(text) {
    return text.length <= PREVIEW_CHARS ? text : text.slice(0, PREVIEW_CHARS) + "…";
}
// ── top bar ─────────────────────────────────────────────────────────
export function renderStatusBar(state) {
    if (state.stale) {
        return (`<div class="banner stale">connection lost — showing records ` +
            `through seq ${state.lastSeq}</div>`);
    }
    return `<div class="banner live"><span class="dot"></span>live · seq ${state.lastSeq}</div>`;
}
// ── live table ──────────────────────────────────────────────────────
function headerCell(state, key, label) {
    const marker = state.sortKey === key ? (state.sortDir === 1 ? " ▲" : " ▼") : "";
    return `<th data-sort="${key}">${label}${marker}</th>`;
}
function recordRow(state, record, ids) {
    const expanded = state.expanded.has(record.prompt_id);
    const scoreClass = record.relative_score >= 0 ? "pos" : "neg";
    const chip = `<span class="chip" style="background:${colorFor(record.agent_id, ids)}"></span>`;
    let html = `<tr class="row" data-toggle="${record.prompt_id}">` +
        `<td>${record.seq}</td>` +
        `<td>${chip}${escapeHtml(record.agent_id)}</td>` +
        `<td class="${scoreClass}">${formatScore(record.relative_score)}</td>` +
        `<td class="status">${escapeHtml(record.status)}</td>` +
        `<td class="preview">${escapeHtml(preview(record.prompt_text))}</td>` +
        `</tr>`;
    if (expanded) {
        html +=
            `<tr class="expanded"><td colspan="5">` +
                `<pre class="prompt-full" data-prompt="${record.prompt_id}">` +
                escapeHtml(record.prompt_text) +
                `</pre>` +
                `<div class="meta">baseline ${formatScore(record.baseline_rig)} · ` +
                `extended ${formatScore(record.extended_rig)} · ` +
                `eval ${record.eval_size} × ${record.repeats}</div>` +
                `</td></tr>`;
    }
    return html;
}
export function renderTable(state) {
    const ids = knownAgentIds(state);
    const rows = visibleRecords(state);
    const filter = `<select id="agent-filter">` +
        `<option value="">all agents</option>` +
        ids
            .map((id) => `<option value="${escapeHtml(id)}"${id === state.agentFilter ? " selected" : ""}>` +
            `${escapeHtml(id)}</option>`)
            .join("") +
        `</select>`;
    if (rows.length === 0) {
        return `${filter}<p class="empty">no records yet</p>`;
    }
    const body = rows.map((r) => recordRow(state, r, ids)).join("");
    return (`${filter}<table class="records"><thead><tr>` +
        headerCell(state, "seq", "seq") +
        headerCell(state, "agent", "agent") +
        headerCell(state, "score", "score") +
        headerCell(state, "status", "status") +
        `<th>prompt</th>` +
        `</tr></thead><tbody>${body}</tbody></table>`);
}
// ── distributions ───────────────────────────────────────────────────
export function renderHistogram(payload) {
    if (payload.total === 0) {
        return `<p class="empty">no scored records for ${escapeHtml(payload.agent)}</p>`;
    }
    const lo = payload.bins[0][0];
    const hi = payload.bins[payload.bins.length - 1][1];
    const span = hi - lo || 1;
    const peak = Math.max(...payload.bins.map((b) => b[2]), 1);
    const bars = payload.bins
        .map(([binLo, binHi, count]) => {
        const height = Math.round((count / peak) * 100);
        const title = `[${binLo.toFixed(4)}, ${binHi.toFixed(4)}): ${count}`;
        return `<div class="bar" title="${title}" style="height:${height}%"></div>`;
    })
        .join("");
    // beneficial scores sit right of this marker, harmful ones left
    const zeroAt = Math.min(Math.max((0 - lo) / span, 0), 1) * 100;
    return (`<div class="histogram" data-total="${payload.total}">` +
        `<div class="bars">${bars}</div>` +
        `<div class="zero-line" style="left:${zeroAt.toFixed(2)}%"></div>` +
        `</div>`);
}
// ── projection ──────────────────────────────────────────────────────
export function renderProjection(payload) {
    if (payload.points.length === 0) {
        return `<p class="empty">nothing to project yet</p>`;
    }
    const ids = [...new Set(payload.points.map((p) => p.agent_id))].sort();
    const xs = payload.points.map((p) => p.x);
    const ys = payload.points.map((p) => p.y);
    const pad = 0.05;
    const spanX = Math.max(...xs) - Math.min(...xs) || 1;
    const spanY = Math.max(...ys) - Math.min(...ys) || 1;
    const minX = Math.min(...xs) - spanX * pad;
    const minY = Math.min(...ys) - spanY * pad;
    const scaleX = 100 / (spanX * (1 + 2 * pad));
    const scaleY = 100 / (spanY * (1 + 2 * pad));
    const dots = payload.points
        .map((p) => {
        const cx = ((p.x - minX) * scaleX).toFixed(2);
        const cy = (100 - (p.y - minY) * scaleY).toFixed(2);
        const title = `${p.agent_id} ${p.score.toFixed(6)}`;
        return (`<circle cx="${cx}" cy="${cy}" r="1.4" fill="${colorFor(p.agent_id, ids)}">` +
            `<title>${escapeHtml(title)}</title></circle>`);
    })
        .join("");
    const note = payload.rank_deficient
        ? `<p class="note">prompt set is rank-deficient; positions are degenerate</p>`
        : "";
    return `<svg class="projection" viewBox="0 0 100 100" preserveAspectRatio="xMidYMid meet">${dots}</svg>${note}`;
}
// ── control panel ───────────────────────────────────────────────────
export function renderControls(state) {
    const disabled = state.controlBusy ? " disabled" : "";
    const cards = state.agents
        .map((agent) => {
        const id = escapeHtml(agent.agent_id);
        const action = agent.paused ? "resume" : "pause";
        const best = agent.best_score === null ? "–" : formatScore(agent.best_score);
        return (`<div class="agent-card${agent.paused ? " paused" : ""}" data-agent="${id}">` +
            `<header><b>${id}</b>` +
            `<span class="badge">${agent.paused ? "paused" : "running"}</span></header>` +
            `<div class="stats">${agent.records} records · best ${best}</div>` +
            `<div class="knobs">` +
            `<label>temp <input type="number" class="param-temperature" min="0" max="2" step="0.05"` +
            ` value="${agent.temperature ?? ""}"${disabled}></label>` +
            `<label>eps <input type="number" class="param-epsilon" min="0" max="1" step="0.05"` +
            ` value="${agent.epsilon ?? ""}"${disabled}></label>` +
            `<button data-action="params" data-agent="${id}"${disabled}>apply</button>` +
            `</div>` +
            `<button data-action="${action}" data-agent="${id}"${disabled}>${action}</button>` +
            `</div>`);
    })
        .join("");
    const ack = state.lastAck
        ? `<div class="ack">${escapeHtml(state.lastAck.op)}` +
            (state.lastAck.agent_id ? ` ${escapeHtml(state.lastAck.agent_id)}` : "") +
            ` acknowledged · effective after seq ${state.lastAck.effective_after_seq}</div>`
        : "";
    return `<div class="agent-cards">${cards}</div>${ack}`;
}
export function renderSeedForm(state) {
    const disabled = state.controlBusy ? " disabled" : "";
    const error = state.seedError
        ? `<div class="seed-error">${escapeHtml(state.seedError)}</div>`
        : "";
    return (`<form id="seed-form">` +
        `<textarea id="seed-text" rows="3" placeholder="New seed prompt; must contain {raw_text} exactly once"${disabled}></textarea>` +
        error +
        `<button type="submit"${disabled}>inject seed</button>` +
        `</form>`);
}
