export const RETRY_MS = 1000;
/**
 * The single long-poll driver. Exactly one request is in flight at a time:
 * the loop waits for each response before issuing the next, drains any
 * backlog page-by-page without long-poll waits, and backs off on errors
 * while flagging the view stale.
 */
export async function pollLoop(client, start, hooks, signal) {
    let cursor = start;
    let caughtUp = false; // drain any backlog without long-poll waits first
    while (!signal.aborted) {
        let page;
        try {
            page = await client.getRecords(cursor, caughtUp);
        }
        catch {
            hooks.onStale(true);
            await hooks.sleep(RETRY_MS);
            continue;
        }
        if (signal.aborted) {
            return;
        }
        hooks.onStale(false);
        if (page.records.length > 0) {
            for (const record of page.records) {
                if (record.seq > cursor)
                    cursor = record.seq;
            }
            hooks.onPage(page);
            hooks.saveCursor(cursor);
        }
        if (page.next === null) {
            caughtUp = true;
        }
        else {
            cursor = Math.max(cursor, page.next);
        }
    }
}
/** Cursor round-trip through a URL fragment like "#since=42". */
export function cursorFromFragment(fragment) {
    const match = /(?:^|[#&])since=(\d+)/.exec(fragment);
    return match ? Number(match[1]) : 0;
}
export function fragmentForCursor(cursor) {
    return `#since=${cursor}`;
}
