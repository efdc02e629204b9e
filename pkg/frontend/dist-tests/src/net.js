// Thin browser-side websocket wrapper around the session protocol.
import { parseServerFrame } from "./protocol.js";
export class SessionLink {
    constructor(url, callbacks) {
        this.ws = new WebSocket(url);
        this.ws.onmessage = (ev) => {
            const frame = parseServerFrame(String(ev.data));
            if (frame === null)
                return;
            if (frame.type === "hello")
                callbacks.onHello(frame);
            else if (frame.type === "state")
                callbacks.onState(frame);
            else
                callbacks.onError(frame);
        };
        this.ws.onclose = () => callbacks.onClose();
        this.ws.onerror = () => callbacks.onClose();
    }
    get open() {
        return this.ws.readyState === WebSocket.OPEN;
    }
    send(payload) {
        if (!this.open)
            return false;
        this.ws.send(payload);
        return true;
    }
    close() {
        this.ws.close();
    }
}
