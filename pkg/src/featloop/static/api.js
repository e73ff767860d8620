export class ApiError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
        this.name = "ApiError";
    }
}
/**
 * Thin client over the server's JSON endpoints. Reads are GETs; the only
 * writes the UI ever performs go through the three control POSTs below.
 */
export class Client {
    base;
    fetchFn;
    constructor(base = "", fetchFn = (url, init) => fetch(url, init)) {
        this.base = base;
        this.fetchFn = fetchFn;
    }
    async request(path, init) {
        const response = await this.fetchFn(this.base + path, init);
        const body = await response.json().catch(() => ({}));
        if (!response.ok) {
            const message = typeof body.error === "string"
                ? body.error
                : `HTTP ${response.status}`;
            throw new ApiError(response.status, message);
        }
        return body;
    }
    post(path, payload) {
        return this.request(path, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(payload),
        });
    }
    getRecords(since, wait) {
        const query = `since=${since}` + (wait ? "&wait=1" : "");
        return this.request(`/api/records?${query}`);
    }
    getAgents() {
        return this.request("/api/agents");
    }
    getHistogram(agent, bins) {
        const scope = agent || "all";
        return this.request(`/api/histogram?agent=${encodeURIComponent(scope)}&bins=${bins}`);
    }
    getProjection() {
        return this.request("/api/projection");
    }
    pause(agentId) {
        return this.post(`/api/control/agents/${encodeURIComponent(agentId)}/pause`, {});
    }
    resume(agentId) {
        return this.post(`/api/control/agents/${encodeURIComponent(agentId)}/resume`, {});
    }
    params(agentId, values) {
        return this.post(`/api/control/agents/${encodeURIComponent(agentId)}/params`, values);
    }
    seed(userTemplate) {
        return this.post("/api/control/seeds", { user_template: userTemplate });
    }
}
