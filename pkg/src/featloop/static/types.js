/**
 * Wire types for the featloop telemetry server. These mirror the JSON the
 * server emits field-for-field; nothing here is derived client-side.
 */
export {};
